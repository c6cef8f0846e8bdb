#pragma once

#include <ostream>
#include <span>
#include <string>

#include <Eigen/Core>

#include "tailnet/similarity_network.hpp"

namespace tailnet {

/// Undirected GraphML: one node per asset (symbol, market_cap, contribution) and one edge per
/// nonzero off-diagonal entry with attribute sign in {+1, -1}.
void write_graphml(std::ostream& out, const SignedAdjacency& adjacency, std::span<const std::string> symbols,
                   const Eigen::VectorXd& caps, const Eigen::VectorXd& contributions);

}  // namespace tailnet
