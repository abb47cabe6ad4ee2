#pragma once

#include "dsffnet/mesh.hpp"
#include "dsffnet/tensor.hpp"

namespace dsffnet {

struct LossBreakdown {
    double l_rec = 0.0;
    double l_edg = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

// mean over vertices of squared Euclidean distance; pred and gt are 3×N
TensorPtr reconstruction_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& gt);

// mean over edges of |l_pred/l_gt − 1|; gt lengths must all be positive
TensorPtr edge_length_loss(Tape& tape, const TensorPtr& pred, const EdgePairs& edges,
                           const std::vector<double>& gt_lengths);

std::vector<double> edge_lengths_of(const Mesh& mesh, const EdgeList& edges);

struct TotalLoss {
    TensorPtr total;
    TensorPtr l_rec;
    TensorPtr l_edg; // null when edges are empty or lambda == 0 path skipped
};

// total = l_rec + lambda·l_edg (edge term still returned when lambda == 0)
TotalLoss total_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& gt,
                     const EdgePairs& edges, const std::vector<double>& gt_lengths,
                     double lambda);

// non-differentiable convenience for evaluation/logging
LossBreakdown loss_breakdown(const Mesh& pred, const Mesh& gt, const EdgeList& edges,
                             double lambda);

} // namespace dsffnet
