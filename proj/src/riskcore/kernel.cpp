#include "aaas/riskcore/kernel.hpp"

#include <mutex>
#include <thread>

#include "aaas/common/byteio.hpp"
#include "aaas/riskcore/analysis.hpp"

namespace aaas::risk {

KernelTables::KernelTables(std::span<const std::uint8_t> yet_blob,
                           std::span<const std::uint8_t> elt_blob,
                           std::span<const std::uint8_t> layer_blob)
    : yet_(yet_blob) {
    // ---- yet blob: header, offsets table, then a full structural walk ----
    ByteReader yr(yet_blob);
    catalog_size_ = yr.u32("yet catalog_size");
    n_trials_ = yr.u64("yet n_trials");
    if (n_trials_ > yet_blob.size() / 8)
        throw MalformedBlob("yet trial count larger than blob", 4);
    yr.require(8 * n_trials_, "yet offsets table");
    offsets_ = yet_blob.data() + yr.offset();

    std::size_t pos = 12 + 8 * static_cast<std::size_t>(n_trials_);
    for (std::uint64_t i = 0; i < n_trials_; ++i) {
        std::uint64_t off = load_u64le(offsets_ + 8 * i);
        if (off != pos) throw MalformedBlob("yet trial offset does not match record position", pos);
        if (pos + 4 > yet_blob.size()) throw MalformedBlob("truncated trial header", pos);
        std::uint32_t n_events = load_u32le(yet_blob.data() + pos);
        pos += 4;
        if (pos + 12ull * n_events > yet_blob.size())
            throw MalformedBlob("truncated trial events", pos);
        for (std::uint32_t e = 0; e < n_events; ++e) {
            std::uint32_t id = load_u32le(yet_blob.data() + pos + 12ull * e);
            if (id >= catalog_size_)
                throw MalformedBlob("event id outside catalog", pos + 12ull * e);
        }
        pos += 12ull * n_events;
    }
    if (pos != yet_blob.size()) throw MalformedBlob("trailing bytes after yet records", pos);

    // ---- elt blob ----
    ByteReader er(elt_blob);
    std::uint32_t n_elts = er.u32("elt count");
    elts_.reserve(n_elts);
    for (std::uint32_t i = 0; i < n_elts; ++i) {
        EltView view{};
        std::uint32_t cat = er.u32("elt catalog_size");
        if (cat != catalog_size_)
            throw MalformedBlob("ELT catalog size disagrees with YET", er.offset() - 4);
        view.retention = er.f64("elt retention");
        view.limit = er.f64("elt limit");
        view.losses = elt_blob.data() + er.offset();
        er.bytes(8ull * cat, "elt losses");
        elts_.push_back(view);
    }
    if (er.remaining() != 0)
        throw MalformedBlob("trailing bytes after elt records", er.offset());

    // ---- layer blob ----
    ByteReader lr(layer_blob);
    std::uint32_t covered = lr.u32("layer n_elts_covered");
    if (covered != n_elts)
        throw MalformedBlob("layer covers " + std::to_string(covered) + " ELTs but blob holds " +
                                std::to_string(n_elts),
                            0);
    terms_.occ_retention = lr.f64("layer occ_ret");
    terms_.occ_limit = lr.f64("layer occ_lim");
    terms_.agg_retention = lr.f64("layer agg_ret");
    terms_.agg_limit = lr.f64("layer agg_lim");
    if (lr.remaining() != 0) throw MalformedBlob("trailing bytes after layer record", lr.offset());
}

void KernelTables::run_range(std::uint64_t begin, std::uint64_t end, std::size_t chunk_size,
                             std::span<double> out) const {
    std::vector<std::uint32_t> stage;  // staged event ids for the current chunk
    for (std::uint64_t t = begin; t < end; ++t) {
        std::uint64_t off = load_u64le(offsets_ + 8 * t);
        const std::uint8_t* rec = yet_.data() + off;
        std::uint32_t n_events = load_u32le(rec);
        const std::uint8_t* events = rec + 4;

        double agg = 0.0;
        for (std::uint32_t chunk_start = 0; chunk_start < n_events; ) {
            std::uint32_t c = static_cast<std::uint32_t>(
                std::min<std::uint64_t>(chunk_size, n_events - chunk_start));
            stage.resize(c);
            for (std::uint32_t k = 0; k < c; ++k)
                stage[k] = load_u32le(events + 12ull * (chunk_start + k));
            for (std::uint32_t k = 0; k < c; ++k) {
                double ev = 0.0;
                for (const EltView& elt : elts_) {
                    double loss = load_f64le(elt.losses + 8ull * stage[k]);
                    ev += apply_terms(loss, elt.retention, elt.limit);
                }
                agg += apply_terms(ev, terms_.occ_retention, terms_.occ_limit);
            }
            chunk_start += c;
        }
        out[t - begin] = apply_terms(agg, terms_.agg_retention, terms_.agg_limit);
    }
}

void risk_kernel(std::span<const std::uint8_t> yet_blob, std::span<const std::uint8_t> elt_blob,
                 std::span<const std::uint8_t> layer_blob, std::span<std::uint8_t> output,
                 unsigned lanes, std::size_t chunk_size, std::uint64_t trial_begin,
                 std::uint64_t trial_end) {
    if (lanes < 1) throw ValidationError("lanes must be >= 1");
    if (chunk_size < 1) throw ValidationError("chunk_size must be >= 1");
    KernelTables tables(yet_blob, elt_blob, layer_blob);

    if (trial_begin > trial_end || trial_end > tables.n_trials())
        throw RangeOutOfBounds("trial range [" + std::to_string(trial_begin) + ", " +
                               std::to_string(trial_end) + ") outside " +
                               std::to_string(tables.n_trials()) + " trials");
    const std::uint64_t count = trial_end - trial_begin;
    if (output.size() < 8 * count)
        throw RangeOutOfBounds("output buffer holds " + std::to_string(output.size()) +
                               " bytes, need " + std::to_string(8 * count));

    std::vector<double> ylt(count, 0.0);
    auto ranges = split_chunk_aligned(count, lanes, chunk_size);
    if (ranges.size() <= 1) {
        if (!ranges.empty())
            tables.run_range(trial_begin, trial_end, chunk_size, ylt);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(ranges.size());
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (auto [b, e] : ranges) {
            threads.emplace_back([&, b, e] {
                try {
                    tables.run_range(trial_begin + b, trial_begin + e, chunk_size,
                                     std::span<double>(ylt).subspan(b, e - b));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(ylt[i]);
        for (int b = 0; b < 8; ++b)
            output[8 * i + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF);
    }
}

}  // namespace aaas::risk
