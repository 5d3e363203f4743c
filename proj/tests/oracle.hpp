#pragma once

// Reference implementation used by the tests only. Written straight from the
// excess-of-loss definitions as a plain triple loop: no partitioning, no
// chunking, no shared helpers with the library beyond the data types. Kept
// deliberately naive so disagreement points at the optimized paths.

#include <cstddef>
#include <vector>

#include "aaas/riskcore/types.hpp"

namespace oracle {

inline double capped_excess(double loss, double retention, double limit) {
    double net = loss - retention;
    if (net < 0.0) net = 0.0;
    if (net > limit) net = limit;
    return net;
}

inline std::vector<double> layer_ylt(const aaas::risk::YearEventTable& yet,
                                     const aaas::risk::EltStore& store,
                                     const aaas::risk::Layer& layer) {
    std::vector<double> ylt;
    ylt.reserve(yet.trials.size());
    for (const auto& trial : yet.trials) {
        double aggregate = 0.0;
        for (const auto& occ : trial.occurrences) {
            double event_sum = 0.0;
            for (std::size_t elt_id : layer.elt_ids) {
                const auto& elt = store[elt_id];
                event_sum +=
                    capped_excess(elt.losses[occ.event_id], elt.terms.retention, elt.terms.limit);
            }
            aggregate += capped_excess(event_sum, layer.terms.occ_retention, layer.terms.occ_limit);
        }
        ylt.push_back(capped_excess(aggregate, layer.terms.agg_retention, layer.terms.agg_limit));
    }
    return ylt;
}

}  // namespace oracle
