#pragma once

#include "netdissect/corpus.hpp"

#include <string>
#include <vector>

namespace netdissect {

inline constexpr int kDefaultTopK = 5;

/// Top-K most and least activating clips of one neuron.
struct ExtremeSelection {
    std::string neuron_id;
    std::vector<std::size_t> high_indices;  // descending activation
    std::vector<std::size_t> low_indices;   // ascending activation
    int k = 0;
};

/// Selects I_h / I_l. Ties go to the lower clip index.
ExtremeSelection select_extremes(const Eigen::Ref<const VectorXd>& u, int k, std::string neuron_id = {});

}  // namespace netdissect
