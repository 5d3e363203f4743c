#include "aaas/riskcore/analysis.hpp"

#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace aaas::risk {

double lookup_loss(const EventLossTable& elt, std::uint32_t event_id) {
    if (event_id >= elt.catalog_size) throw IndexOutOfCatalog(event_id, elt.catalog_size);
    return elt.losses[event_id];
}

double event_loss(std::uint32_t event_id, const Layer& layer, const EltStore& elts) {
    double sum = 0.0;
    for (std::size_t id : layer.elt_ids) {
        const EventLossTable& elt = elts[id];
        sum += apply_terms(lookup_loss(elt, event_id), elt.terms.retention, elt.terms.limit);
    }
    return sum;
}

double trial_loss(const Trial& trial, const Layer& layer, const EltStore& elts) {
    double agg = 0.0;
    for (const EventOccurrence& occ : trial.occurrences) {
        double ev = event_loss(occ.event_id, layer, elts);
        agg += apply_terms(ev, layer.terms.occ_retention, layer.terms.occ_limit);
    }
    return apply_terms(agg, layer.terms.agg_retention, layer.terms.agg_limit);
}

const YearLossTable& AnalysisResult::ylt(std::size_t program, std::size_t layer) const {
    for (const LayerResult& r : layers)
        if (r.program_index == program && r.layer_index == layer) return r.ylt;
    throw std::out_of_range("no result for program " + std::to_string(program) + " layer " +
                            std::to_string(layer));
}

std::vector<std::pair<std::size_t, std::size_t>> split_near_equal(std::size_t n,
                                                                  std::size_t parts) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    ranges.reserve(parts);
    std::size_t base = parts ? n / parts : 0;
    std::size_t extra = parts ? n % parts : 0;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < parts; ++i) {
        std::size_t len = base + (i < extra ? 1 : 0);
        ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    return ranges;
}

std::vector<std::pair<std::size_t, std::size_t>> split_chunk_aligned(std::size_t n, unsigned lanes,
                                                                     std::size_t chunk) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    if (lanes == 0) return ranges;
    std::size_t block = (n + lanes - 1) / lanes;
    if (chunk > 1) block = ((block + chunk - 1) / chunk) * chunk;
    if (block == 0) block = 1;
    for (std::size_t begin = 0; begin < n; begin += block)
        ranges.emplace_back(begin, std::min(begin + block, n));
    return ranges;
}

namespace {

// Runs fn over each range, one lane thread per range when more than one.
// A thrown exception in any lane is rethrown to the caller.
void run_ranges(const std::vector<std::pair<std::size_t, std::size_t>>& ranges,
                const std::function<void(std::size_t, std::size_t)>& fn) {
    if (ranges.size() <= 1) {
        for (auto [b, e] : ranges) fn(b, e);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(ranges.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (auto [b, e] : ranges) {
        threads.emplace_back([&, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

AnalysisResult analyze(const Portfolio& portfolio, const YearEventTable& yet, const EltStore& elts,
                       unsigned lanes, std::size_t chunk_size) {
    if (lanes < 1) throw ValidationError("lanes must be >= 1");
    if (chunk_size < 1) throw ValidationError("chunk_size must be >= 1");
    validate(yet);
    for (const EventLossTable& elt : elts) validate(elt);
    validate_catalog_agreement(yet, elts);
    validate(portfolio, elts.size());

    AnalysisResult result;
    const std::size_t n_trials = yet.trials.size();
    for (std::size_t p = 0; p < portfolio.programs.size(); ++p) {
        const Program& program = portfolio.programs[p];
        for (std::size_t l = 0; l < program.layers.size(); ++l) {
            const Layer& layer = program.layers[l];
            YearLossTable ylt(n_trials, 0.0);
            auto ranges = split_chunk_aligned(n_trials, lanes, chunk_size);
            run_ranges(ranges, [&](std::size_t begin, std::size_t end) {
                for (std::size_t t = begin; t < end; ++t)
                    ylt[t] = trial_loss(yet.trials[t], layer, elts);
            });
            result.layers.push_back({p, l, std::move(ylt)});
        }
    }
    return result;
}

}  // namespace aaas::risk
