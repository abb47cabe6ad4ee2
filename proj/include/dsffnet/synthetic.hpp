#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsffnet/mesh.hpp"

namespace dsffnet {

// A chain of K capsule limbs. Tessellation: segments_around vertices per
// ring, segments_along intervals along each cylinder body, 2 hemisphere
// rings per cap → every capsule has 2 + (segments_along+3)·segments_around
// vertices regardless of pose.
struct IdentitySpec {
    std::vector<double> lengths; // K, each > 0
    std::vector<double> radii;   // K, each > 0
    std::size_t segments_around = 7;
    std::size_t segments_along = 11;

    std::size_t link_count() const { return lengths.size(); }
    std::size_t vertices_per_capsule() const;
    void validate() const;
};

// K−1 joint angles about fixed alternating axes (z, x, z, ...).
struct PoseSpec {
    std::vector<double> angles;
    void validate() const;
};

struct TripleMeta {
    std::size_t index = 0;
    std::size_t src_identity = 0, src_pose = 0;
    std::size_t tgt_identity = 0, tgt_pose = 0;
    std::uint64_t shuffle_seed = 0;
    bool seen = true;
};

struct Triple {
    Mesh source, target, gt;
    TripleMeta meta;
};

IdentitySpec gen_identity(std::uint64_t seed, std::size_t k, std::size_t segments_around = 7);
PoseSpec gen_pose(std::uint64_t seed, std::size_t k);

// rest-pose chain runs along +x; joint j sits at the cumulative length and
// rotates the distal subchain; vertices inside the blend band around a joint
// mix the two adjacent bone transforms linearly
Mesh skin(const IdentitySpec& identity, const PoseSpec& pose);

// base, K−1 joints, endpoint — after forward kinematics (K+1 points)
std::vector<std::array<double, 3>> fk_joint_positions(const IdentitySpec& identity,
                                                      const PoseSpec& pose);

Triple make_triple(const IdentitySpec& id_a, const PoseSpec& pose_p, const IdentitySpec& id_b,
                   const PoseSpec& pose_q, std::uint64_t shuffle_seed);

struct DatasetManifest {
    std::size_t n_identities = 0;
    std::size_t n_poses = 0;
    std::size_t chain_links = 3;
    std::size_t resolution = 7; // segments_around
    std::uint64_t seed = 0;
    double unseen_frac = 0.25;
    std::vector<bool> pose_seen;     // per pose id
    std::vector<TripleMeta> triples; // one per (identity, pose) source combination
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Triple> triples;

    std::vector<std::size_t> split_indices(bool seen) const;
};

Dataset make_dataset(std::size_t n_identities, std::size_t n_poses, std::uint64_t seed,
                     std::size_t resolution = 7, double unseen_frac = 0.25,
                     std::size_t chain_links = 3);

// directory layout: manifest.json + triples/<index>/{source,target,gt}.obj
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

} // namespace dsffnet
