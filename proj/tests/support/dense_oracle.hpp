#pragma once

// Brute-force dense Gauss-Newton reference for the sparse optimizer. Kept
// independent of the implementation path: residuals are re-derived here with
// rotation matrices, Jacobians come from central finite differences, and the
// normal equations are solved densely.

#include <vector>

#include "mapfusion/factor_graph.hpp"

namespace mapfusion::test {

double oracle_cost(const fusion::FusionGraph& graph,
                   const std::vector<geom::Pose>& poses);

std::vector<geom::Pose> oracle_optimize(const fusion::FusionGraph& graph,
                                        std::vector<geom::Pose> initial,
                                        int max_iterations = 100,
                                        double relative_tol = 1e-9);

/// Dense marginal covariance of one pose at a linearization point.
fusion::Matrix6d oracle_pose_covariance(const fusion::FusionGraph& graph,
                                        const std::vector<geom::Pose>& linearization,
                                        std::size_t index);

}  // namespace mapfusion::test
