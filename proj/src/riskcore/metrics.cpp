#include "aaas/riskcore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace aaas::risk {

namespace {
YearLossTable sorted_descending(const YearLossTable& ylt) {
    YearLossTable sorted = ylt;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    return sorted;
}
}  // namespace

double pml(const YearLossTable& ylt, double return_period) {
    if (ylt.empty()) throw EmptyTable();
    if (!(return_period > 1.0) || !std::isfinite(return_period))
        throw InvalidReturnPeriod(return_period);

    const std::size_t n = ylt.size();
    auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) / return_period));
    k = std::clamp<std::size_t>(k, 1, n);
    return sorted_descending(ylt)[k - 1];
}

double tvar(const YearLossTable& ylt, double alpha) {
    if (ylt.empty()) throw EmptyTable();
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw InvalidAlpha(alpha);

    const std::size_t n = ylt.size();
    auto m = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(n)));
    m = std::clamp<std::size_t>(m, 1, n);

    YearLossTable sorted = sorted_descending(ylt);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += sorted[i];
    return sum / static_cast<double>(m);
}

}  // namespace aaas::risk
