#pragma once

#include <cstdint>

#include "aaas/riskcore/types.hpp"

// Deterministic synthetic corpora shaped like industry inputs. Every artifact
// is generated from its own splitmix64 stream so tables can be produced
// independently and in any order:
//   YET stream:       seed + 0x0000
//   ELT i stream:     seed + 0x10000 + i
//   portfolio stream: seed + 0x20000
// Draw order is part of the format and must not change:
//   YET, per trial:  event count, then per event (id, timestamp); the
//                    (id, timestamp) pairs are then stable-sorted by timestamp.
//   ELT:             retention, limit, then per catalog entry a coverage draw
//                    followed (if covered) by the loss draw.
//   portfolio layer: occ_ret, occ_lim, agg_ret, agg_lim.

namespace aaas::datagen {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct GenSpec {
    std::uint64_t seed = 42;
    std::size_t n_trials = 10'000;
    std::uint32_t events_min = 50;  // per-trial event count drawn uniformly
    std::uint32_t events_max = 150;
    std::uint32_t catalog_size = 10'000;
    std::size_t n_elts = 16;
    double elt_density = 0.3;            // coverage probability per catalog entry
    Range loss_range{1'000.0, 500'000.0};
    Range elt_retention_range{0.0, 5'000.0};
    Range elt_limit_range{100'000.0, 1'000'000.0};
    Range occ_retention_range{10'000.0, 50'000.0};
    Range occ_limit_range{500'000.0, 2'000'000.0};
    Range agg_retention_range{50'000.0, 200'000.0};
    Range agg_limit_range{5'000'000.0, 20'000'000.0};

    double mean_events() const { return (events_min + events_max) / 2.0; }
};

// Throws InvalidSpec on the first violated constraint.
void validate(const GenSpec& spec);

risk::YearEventTable gen_yet(const GenSpec& spec);
risk::EltStore gen_elts(const GenSpec& spec);

// Default shape: one program with one layer covering every generated ELT.
risk::Portfolio gen_portfolio(const GenSpec& spec);

}  // namespace aaas::datagen
