#pragma once

#include "aaas/riskcore/types.hpp"

// Portfolio risk metrics over a year loss table, both defined as empirical
// order statistics on the sorted losses.

namespace aaas::risk {

// Probable maximum loss at the given return period: the k-th largest loss
// with k = max(1, floor(N / return_period)).
// Throws EmptyTable / InvalidReturnPeriod (return_period must be > 1).
double pml(const YearLossTable& ylt, double return_period);

// Tail value-at-risk: mean of the m = max(1, ceil((1 - alpha) * N)) largest
// losses. Throws EmptyTable / InvalidAlpha (alpha strictly in (0,1)).
double tvar(const YearLossTable& ylt, double alpha);

}  // namespace aaas::risk
