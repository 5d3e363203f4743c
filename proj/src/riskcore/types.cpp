#include "aaas/riskcore/types.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace aaas::risk {

void validate(const YearEventTable& yet) {
    for (std::size_t t = 0; t < yet.trials.size(); ++t) {
        const Trial& trial = yet.trials[t];
        double prev_ts = 0.0;
        for (std::size_t e = 0; e < trial.occurrences.size(); ++e) {
            const EventOccurrence& occ = trial.occurrences[e];
            if (occ.event_id >= yet.catalog_size)
                throw IndexOutOfCatalog(occ.event_id, yet.catalog_size);
            if (!std::isfinite(occ.timestamp) || occ.timestamp < 0.0)
                throw ValidationError("trial " + std::to_string(t) + " event " + std::to_string(e) +
                                      ": timestamp must be finite and non-negative");
            if (e > 0 && occ.timestamp < prev_ts)
                throw ValidationError("trial " + std::to_string(t) +
                                      ": timestamps must be non-decreasing");
            prev_ts = occ.timestamp;
        }
    }
}

void validate(const EventLossTable& elt) {
    if (elt.losses.size() != elt.catalog_size)
        throw ValidationError("ELT loss array length " + std::to_string(elt.losses.size()) +
                              " != catalog size " + std::to_string(elt.catalog_size));
    for (double l : elt.losses)
        if (!std::isfinite(l) || l < 0.0)
            throw ValidationError("ELT losses must be finite and non-negative");
    if (!std::isfinite(elt.terms.retention) || elt.terms.retention < 0.0)
        throw ValidationError("ELT retention must be finite and non-negative");
    if (!std::isfinite(elt.terms.limit) || elt.terms.limit < 0.0)
        throw ValidationError("ELT limit must be finite and non-negative");
}

void validate(const Layer& layer, std::size_t store_size) {
    if (layer.elt_ids.empty()) throw ValidationError("layer must cover at least one ELT");
    std::unordered_set<std::size_t> seen;
    for (std::size_t id : layer.elt_ids) {
        if (id >= store_size)
            throw ValidationError("layer references ELT " + std::to_string(id) +
                                  " outside store of size " + std::to_string(store_size));
        if (!seen.insert(id).second)
            throw ValidationError("layer ELT ids must be distinct (duplicate " +
                                  std::to_string(id) + ")");
    }
    const LayerTerms& t = layer.terms;
    for (double v : {t.occ_retention, t.occ_limit, t.agg_retention, t.agg_limit})
        if (!std::isfinite(v) || v < 0.0)
            throw ValidationError("layer terms must be finite and non-negative");
}

void validate(const Portfolio& portfolio, std::size_t store_size) {
    if (portfolio.programs.empty()) throw ValidationError("portfolio must contain programs");
    for (const Program& p : portfolio.programs) {
        if (p.layers.empty()) throw ValidationError("every program needs at least one layer");
        for (const Layer& layer : p.layers) validate(layer, store_size);
    }
}

void validate_catalog_agreement(const YearEventTable& yet, const EltStore& elts) {
    for (std::size_t i = 0; i < elts.size(); ++i)
        if (elts[i].catalog_size != yet.catalog_size)
            throw ValidationError("ELT " + std::to_string(i) + " catalog size " +
                                  std::to_string(elts[i].catalog_size) + " != YET catalog size " +
                                  std::to_string(yet.catalog_size));
}

}  // namespace aaas::risk
