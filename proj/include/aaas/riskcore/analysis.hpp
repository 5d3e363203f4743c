#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "aaas/riskcore/types.hpp"

namespace aaas::risk {

// Excess-of-loss terms: net loss after retention, capped at the limit.
// Total on valid inputs; result is always in [0, limit].
inline double apply_terms(double loss, double retention, double limit) {
    return std::min(std::max(loss - retention, 0.0), limit);
}

// Direct-access lookup; 0.0 means the event is not covered by this ELT.
double lookup_loss(const EventLossTable& elt, std::uint32_t event_id);

// Loss of one event across all ELTs of a layer, each net of its own terms,
// summed in elt_ids order.
double event_loss(std::uint32_t event_id, const Layer& layer, const EltStore& elts);

// Trial loss per the aggregate analysis: occurrence terms per event, running
// sum accumulated strictly in stored event order, aggregate terms applied to
// the final sum. Deterministic: a fixed input yields bitwise-identical output.
double trial_loss(const Trial& trial, const Layer& layer, const EltStore& elts);

struct LayerResult {
    std::size_t program_index = 0;
    std::size_t layer_index = 0;
    YearLossTable ylt;

    bool operator==(const LayerResult&) const = default;
};

// One YLT per (program, layer), ordered by (program_index, layer_index).
struct AnalysisResult {
    std::vector<LayerResult> layers;

    bool operator==(const AnalysisResult&) const = default;

    const YearLossTable& ylt(std::size_t program, std::size_t layer) const;
};

// Full portfolio analysis. Trials are independent; `lanes` splits them into
// contiguous blocks computed concurrently, and `chunk_size` controls event
// staging inside a trial. Neither affects the output bytes.
// Validates all inputs before any computation starts.
AnalysisResult analyze(const Portfolio& portfolio, const YearEventTable& yet, const EltStore& elts,
                       unsigned lanes, std::size_t chunk_size);

// Contiguous near-equal split of [0, n) into `parts` ranges (sizes differ by
// at most one). Used for device partitioning; returns begin/end pairs.
std::vector<std::pair<std::size_t, std::size_t>> split_near_equal(std::size_t n, std::size_t parts);

// Contiguous chunk-aligned split of [0, n) into at most `lanes` blocks: block
// size is ceil(n/lanes) rounded up to a multiple of `chunk`. Trailing lanes
// may be empty.
std::vector<std::pair<std::size_t, std::size_t>> split_chunk_aligned(std::size_t n, unsigned lanes,
                                                                     std::size_t chunk);

}  // namespace aaas::risk
