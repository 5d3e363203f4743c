#pragma once

#include <cstdint>
#include <vector>

#include "aaas/common/errors.hpp"

// Domain model for aggregate risk analysis. All tables are immutable after
// construction; validation is explicit and runs before any computation.

namespace aaas::risk {

// One event occurrence inside a trial: catalog index plus the fractional day
// (in [0, 365)) at which the event strikes.
struct EventOccurrence {
    std::uint32_t event_id = 0;
    double timestamp = 0.0;

    bool operator==(const EventOccurrence&) const = default;
};

// One simulated year: occurrences ordered by ascending timestamp.
struct Trial {
    std::vector<EventOccurrence> occurrences;

    bool operator==(const Trial&) const = default;
};

// Database of pre-simulated trials drawn from a catalog of catalog_size events.
struct YearEventTable {
    std::vector<Trial> trials;
    std::uint32_t catalog_size = 0;

    bool operator==(const YearEventTable&) const = default;
};

// Per-ELT financial terms: an excess-of-loss retention/limit pair.
struct ELTerms {
    double retention = 0.0;
    double limit = 0.0;

    bool operator==(const ELTerms&) const = default;
};

// Dense event -> loss map. losses[event_id] is 0.0 for uncovered events;
// the array always spans the full catalog for direct access.
struct EventLossTable {
    std::uint32_t catalog_size = 0;
    std::vector<double> losses;
    ELTerms terms;

    bool operator==(const EventLossTable&) const = default;
};

using EltStore = std::vector<EventLossTable>;

// Occurrence terms apply per event, aggregate terms to the running annual sum.
struct LayerTerms {
    double occ_retention = 0.0;
    double occ_limit = 0.0;
    double agg_retention = 0.0;
    double agg_limit = 0.0;

    bool operator==(const LayerTerms&) const = default;
};

// A reinsurance contract element: the ELTs it covers plus its terms.
struct Layer {
    std::vector<std::size_t> elt_ids;
    LayerTerms terms;

    bool operator==(const Layer&) const = default;
};

struct Program {
    std::vector<Layer> layers;

    bool operator==(const Program&) const = default;
};

struct Portfolio {
    std::vector<Program> programs;

    bool operator==(const Portfolio&) const = default;
};

// Per-trial final losses; index = trial index.
using YearLossTable = std::vector<double>;

// ---- validation -----------------------------------------------------------
// Each check throws ValidationError (or IndexOutOfCatalog) on the first
// violated invariant.

void validate(const YearEventTable& yet);
void validate(const EventLossTable& elt);
void validate(const Layer& layer, std::size_t store_size);
void validate(const Portfolio& portfolio, std::size_t store_size);

// Cross-table agreement: every ELT must share the YET's catalog size.
void validate_catalog_agreement(const YearEventTable& yet, const EltStore& elts);

}  // namespace aaas::risk
