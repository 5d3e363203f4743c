#include "aaas/datagen/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "aaas/datagen/splitmix.hpp"

namespace aaas::datagen {

namespace {
constexpr std::uint64_t kYetStream = 0x0000;
constexpr std::uint64_t kEltStreamBase = 0x10000;
constexpr std::uint64_t kPortfolioStream = 0x20000;

void check_range(const Range& r, const char* name) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi)
        throw InvalidSpec(std::string(name) + " range must be finite with lo <= hi");
    if (r.lo < 0.0) throw InvalidSpec(std::string(name) + " range must be non-negative");
}
}  // namespace

void validate(const GenSpec& spec) {
    if (spec.n_trials < 1) throw InvalidSpec("n_trials must be >= 1");
    if (spec.events_min > spec.events_max) throw InvalidSpec("events_min must be <= events_max");
    if (spec.catalog_size < 1) throw InvalidSpec("catalog_size must be >= 1");
    if (spec.n_elts < 1) throw InvalidSpec("n_elts must be >= 1");
    if (!(spec.elt_density > 0.0) || spec.elt_density > 1.0)
        throw InvalidSpec("elt_density must lie in (0, 1]");
    check_range(spec.loss_range, "loss");
    check_range(spec.elt_retention_range, "elt retention");
    check_range(spec.elt_limit_range, "elt limit");
    check_range(spec.occ_retention_range, "occ retention");
    check_range(spec.occ_limit_range, "occ limit");
    check_range(spec.agg_retention_range, "agg retention");
    check_range(spec.agg_limit_range, "agg limit");
}

risk::YearEventTable gen_yet(const GenSpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed + kYetStream);

    risk::YearEventTable yet;
    yet.catalog_size = spec.catalog_size;
    yet.trials.resize(spec.n_trials);
    for (risk::Trial& trial : yet.trials) {
        auto n_events =
            static_cast<std::uint32_t>(rng.next_in(spec.events_min, spec.events_max));
        trial.occurrences.resize(n_events);
        for (risk::EventOccurrence& occ : trial.occurrences) {
            occ.event_id = static_cast<std::uint32_t>(rng.next_in(0, spec.catalog_size - 1));
            occ.timestamp = rng.next_range(0.0, 365.0);
        }
        std::stable_sort(trial.occurrences.begin(), trial.occurrences.end(),
                         [](const risk::EventOccurrence& a, const risk::EventOccurrence& b) {
                             return a.timestamp < b.timestamp;
                         });
    }
    return yet;
}

risk::EltStore gen_elts(const GenSpec& spec) {
    validate(spec);
    risk::EltStore elts(spec.n_elts);
    for (std::size_t i = 0; i < spec.n_elts; ++i) {
        SplitMix64 rng(spec.seed + kEltStreamBase + i);
        risk::EventLossTable& elt = elts[i];
        elt.catalog_size = spec.catalog_size;
        elt.terms.retention =
            rng.next_range(spec.elt_retention_range.lo, spec.elt_retention_range.hi);
        elt.terms.limit = rng.next_range(spec.elt_limit_range.lo, spec.elt_limit_range.hi);
        elt.losses.assign(spec.catalog_size, 0.0);
        for (std::uint32_t e = 0; e < spec.catalog_size; ++e)
            if (rng.next_unit() < spec.elt_density)
                elt.losses[e] = rng.next_range(spec.loss_range.lo, spec.loss_range.hi);
    }
    return elts;
}

risk::Portfolio gen_portfolio(const GenSpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed + kPortfolioStream);

    risk::Layer layer;
    layer.elt_ids.resize(spec.n_elts);
    for (std::size_t i = 0; i < spec.n_elts; ++i) layer.elt_ids[i] = i;
    layer.terms.occ_retention =
        rng.next_range(spec.occ_retention_range.lo, spec.occ_retention_range.hi);
    layer.terms.occ_limit = rng.next_range(spec.occ_limit_range.lo, spec.occ_limit_range.hi);
    layer.terms.agg_retention =
        rng.next_range(spec.agg_retention_range.lo, spec.agg_retention_range.hi);
    layer.terms.agg_limit = rng.next_range(spec.agg_limit_range.lo, spec.agg_limit_range.hi);

    risk::Portfolio portfolio;
    portfolio.programs.push_back(risk::Program{{layer}});
    return portfolio;
}

}  // namespace aaas::datagen
