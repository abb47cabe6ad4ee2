#include "dsffnet/losses.hpp"

#include <cmath>
#include <string>

#include "dsffnet/errors.hpp"

namespace dsffnet {

TensorPtr reconstruction_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& gt) {
    if (pred->shape != gt->shape) {
        const std::size_t axis =
            (!pred->shape.empty() && !gt->shape.empty() && pred->shape[0] != gt->shape[0]) ? 0 : 1;
        throw DimensionError("reconstruction_loss: pred/gt shape mismatch on axis " +
                             std::to_string(axis));
    }
    const std::size_t n = pred->cols();
    auto d = tape.sub(pred, gt);
    auto sq = tape.mul(d, d);
    // Σ over all 3N entries equals Σ_i ‖d_i‖²; mean is over vertices
    return tape.scale(tape.sum_all(sq), 1.0 / static_cast<double>(n));
}

std::vector<double> edge_lengths_of(const Mesh& mesh, const EdgeList& edges) {
    std::vector<double> out(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        double s = 0.0;
        for (int d = 0; d < 3; ++d) {
            const double diff = mesh.vertices[edges[e][0]][d] - mesh.vertices[edges[e][1]][d];
            s += diff * diff;
        }
        out[e] = std::sqrt(s);
    }
    return out;
}

TensorPtr edge_length_loss(Tape& tape, const TensorPtr& pred, const EdgePairs& edges,
                           const std::vector<double>& gt_lengths) {
    if (edges.empty()) throw ContractError("edge_length_loss: edge list is empty");
    if (gt_lengths.size() != edges.size())
        throw DimensionError("edge_length_loss: gt length count mismatch on axis 0");
    for (std::size_t e = 0; e < gt_lengths.size(); ++e)
        if (!(gt_lengths[e] > 0.0))
            throw DegenerateMeshError("edge_length_loss: gt edge " + std::to_string(e) +
                                      " has zero length");
    auto lp = tape.edge_lengths(pred, edges);
    // true division so identical lengths give a ratio of exactly 1
    auto ratio = tape.div(lp, make_tensor({edges.size()}, gt_lengths));
    return tape.mean_all(tape.abs(tape.add_scalar(ratio, -1.0)));
}

TotalLoss total_loss(Tape& tape, const TensorPtr& pred, const TensorPtr& gt,
                     const EdgePairs& edges, const std::vector<double>& gt_lengths,
                     double lambda) {
    TotalLoss out;
    out.l_rec = reconstruction_loss(tape, pred, gt);
    out.l_edg = edge_length_loss(tape, pred, edges, gt_lengths);
    out.total = tape.add(out.l_rec, tape.scale(out.l_edg, lambda));
    return out;
}

LossBreakdown loss_breakdown(const Mesh& pred, const Mesh& gt, const EdgeList& edges,
                             double lambda) {
    Tape tape;
    auto pred_t = make_tensor({3, pred.vertex_count()}, mesh_to_columns(pred));
    auto gt_t = make_tensor({3, gt.vertex_count()}, mesh_to_columns(gt));
    auto gl = edge_lengths_of(gt, edges);
    auto tl = total_loss(tape, pred_t, gt_t, edges, gl, lambda);
    LossBreakdown b;
    b.l_rec = tl.l_rec->data[0];
    b.l_edg = tl.l_edg->data[0];
    b.lambda = lambda;
    b.total = tl.total->data[0];
    return b;
}

} // namespace dsffnet
