#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aaas/riskcore/types.hpp"

// Kernel form of the aggregate analysis for remote execution: it reads the
// encoded table images in place (direct-access tables, no materialisation)
// and writes a float64 YLT segment. Arithmetic order is identical to the
// host-side analyze() so outputs are bitwise equal.

namespace aaas::risk {

// Validated views into the three table blobs. Binding parses the headers,
// checks trial offsets, event ids and catalog agreement, and rejects any
// structural problem as MalformedBlob before compute starts.
class KernelTables {
public:
    KernelTables(std::span<const std::uint8_t> yet_blob, std::span<const std::uint8_t> elt_blob,
                 std::span<const std::uint8_t> layer_blob);

    std::uint64_t n_trials() const { return n_trials_; }
    std::uint32_t catalog_size() const { return catalog_size_; }

    // out[k] = trial loss of trial (begin + k); events are staged and
    // processed in blocks of chunk_size (result-neutral).
    void run_range(std::uint64_t begin, std::uint64_t end, std::size_t chunk_size,
                   std::span<double> out) const;

private:
    struct EltView {
        const std::uint8_t* losses;  // catalog_size consecutive f64le values
        double retention;
        double limit;
    };

    std::span<const std::uint8_t> yet_;
    std::uint32_t catalog_size_ = 0;
    std::uint64_t n_trials_ = 0;
    const std::uint8_t* offsets_ = nullptr;
    std::vector<EltView> elts_;
    LayerTerms terms_;
};

// Full kernel entry: decodes/validates the blobs, checks the trial range and
// output capacity, then computes the segment with up to `lanes` concurrent
// lane threads over contiguous chunk-aligned blocks.
// Throws MalformedBlob or RangeOutOfBounds.
void risk_kernel(std::span<const std::uint8_t> yet_blob, std::span<const std::uint8_t> elt_blob,
                 std::span<const std::uint8_t> layer_blob, std::span<std::uint8_t> output,
                 unsigned lanes, std::size_t chunk_size, std::uint64_t trial_begin,
                 std::uint64_t trial_end);

}  // namespace aaas::risk
