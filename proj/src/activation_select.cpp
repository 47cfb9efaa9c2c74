#include "netdissect/activation_select.hpp"

#include "netdissect/error.hpp"

#include <algorithm>
#include <numeric>

namespace netdissect {

ExtremeSelection select_extremes(const Eigen::Ref<const VectorXd>& u, int k, std::string neuron_id) {
    const auto n = static_cast<std::size_t>(u.size());
    if (k < 1) throw invalid_argument("K must be >= 1, got " + std::to_string(k));
    if (static_cast<std::size_t>(k) > n)
        throw invalid_argument("K=" + std::to_string(k) + " exceeds corpus size " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(u[static_cast<Eigen::Index>(i)]))
            throw invalid_argument("non-finite activation at clip index " + std::to_string(i));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto kk = static_cast<std::ptrdiff_t>(k);

    ExtremeSelection sel;
    sel.neuron_id = std::move(neuron_id);
    sel.k = k;

    auto high = order;
    std::partial_sort(high.begin(), high.begin() + kk, high.end(), [&](std::size_t a, std::size_t b) {
        const double ua = u[static_cast<Eigen::Index>(a)], ub = u[static_cast<Eigen::Index>(b)];
        return ua != ub ? ua > ub : a < b;
    });
    sel.high_indices.assign(high.begin(), high.begin() + kk);

    // Low set excludes the high set when 2K <= N.
    auto low = 2 * static_cast<std::size_t>(k) <= n ? std::vector<std::size_t>(high.begin() + kk, high.end()) : std::move(order);
    std::partial_sort(low.begin(), low.begin() + kk, low.end(), [&](std::size_t a, std::size_t b) {
        const double ua = u[static_cast<Eigen::Index>(a)], ub = u[static_cast<Eigen::Index>(b)];
        return ua != ub ? ua < ub : a < b;
    });
    sel.low_indices.assign(low.begin(), low.begin() + kk);
    return sel;
}

}  // namespace netdissect
