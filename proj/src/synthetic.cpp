#include "dsffnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dsffnet/errors.hpp"
#include "dsffnet/rng.hpp"

namespace dsffnet {

namespace {

constexpr std::size_t kHemisphereRings = 2;
constexpr double kBlendBandFrac = 0.15;
constexpr double kPi = 3.14159265358979323846;

// rigid transform: p → R(p − c) + c + t, kept as rotation + offset
struct Rigid {
    std::array<std::array<double, 3>, 3> r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    std::array<double, 3> t{0, 0, 0};

    std::array<double, 3> apply(const std::array<double, 3>& p) const {
        std::array<double, 3> out;
        for (int i = 0; i < 3; ++i)
            out[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
        return out;
    }

    // this ∘ other (apply other first)
    Rigid compose(const Rigid& o) const {
        Rigid out;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                out.r[i][j] = 0;
                for (int k = 0; k < 3; ++k) out.r[i][j] += r[i][k] * o.r[k][j];
            }
        out.t = apply(o.t);
        return out;
    }
};

// rotation by angle about axis (0=x, 2=z) centered at point c
Rigid rotation_about(const std::array<double, 3>& c, int axis, double angle) {
    const double s = std::sin(angle), co = std::cos(angle);
    Rigid rot;
    if (axis == 0) { // x
        rot.r = {{{1, 0, 0}, {0, co, -s}, {0, s, co}}};
    } else { // z
        rot.r = {{{co, -s, 0}, {s, co, 0}, {0, 0, 1}}};
    }
    // translate so c is a fixed point: t = c − R·c
    for (int i = 0; i < 3; ++i)
        rot.t[i] = c[i] - (rot.r[i][0] * c[0] + rot.r[i][1] * c[1] + rot.r[i][2] * c[2]);
    return rot;
}

int joint_axis(std::size_t joint) { return joint % 2 == 0 ? 2 : 0; } // z, x, z, x, ...

// per-bone rigid transforms from the joint angles
std::vector<Rigid> bone_transforms(const IdentitySpec& identity, const PoseSpec& pose) {
    const std::size_t k = identity.link_count();
    std::vector<Rigid> bones(k);
    double offset = 0.0;
    for (std::size_t b = 1; b < k; ++b) {
        offset += identity.lengths[b - 1];
        const Rigid local = rotation_about({offset, 0, 0}, joint_axis(b - 1), pose.angles[b - 1]);
        bones[b] = bones[b - 1].compose(local);
    }
    return bones;
}

// profile stations of one capsule: (x along bone, ring radius), poles excluded
std::vector<std::array<double, 2>> capsule_profile(double len, double r, std::size_t sl) {
    std::vector<std::array<double, 2>> st;
    const std::size_t h = kHemisphereRings;
    for (std::size_t k = 1; k <= h; ++k) { // bottom cap: pole → equator
        const double phi = -0.5 * kPi + static_cast<double>(k) * (0.5 * kPi / h);
        st.push_back({r * std::sin(phi), r * std::cos(phi)});
    }
    for (std::size_t i = 1; i + 1 <= sl; ++i) // cylinder interior rings
        st.push_back({len * static_cast<double>(i) / static_cast<double>(sl), r});
    for (std::size_t k = 0; k < h; ++k) { // top cap: equator → below pole
        const double phi = static_cast<double>(k) * (0.5 * kPi / h);
        st.push_back({len + r * std::sin(phi), r * std::cos(phi)});
    }
    return st;
}

} // namespace

std::size_t IdentitySpec::vertices_per_capsule() const {
    return 2 + (2 * kHemisphereRings + segments_along - 1) * segments_around;
}

void IdentitySpec::validate() const {
    if (lengths.size() < 2) throw ContractError("identity: needs at least 2 limbs");
    if (radii.size() != lengths.size())
        throw ContractError("identity: lengths/radii count mismatch");
    for (double l : lengths)
        if (!(l > 0)) throw ContractError("identity: limb lengths must be positive");
    for (double r : radii)
        if (!(r > 0)) throw ContractError("identity: limb radii must be positive");
    if (segments_around < 3) throw ContractError("identity: need ≥3 segments around");
    if (segments_along < 2) throw ContractError("identity: need ≥2 segments along");
}

void PoseSpec::validate() const {
    for (double a : angles)
        if (!(a >= -0.5 * kPi && a <= 0.5 * kPi))
            throw ContractError("pose: joint angle outside [-pi/2, pi/2]");
}

IdentitySpec gen_identity(std::uint64_t seed, std::size_t k, std::size_t segments_around) {
    if (k < 2) throw ContractError("gen_identity: K must be at least 2");
    SplitMix64 rng(seed);
    IdentitySpec id;
    id.segments_around = segments_around;
    id.segments_along = 2 * segments_around - 3; // 7 → 11 → 100 vertices per capsule
    id.lengths.resize(k);
    id.radii.resize(k);
    for (auto& l : id.lengths) l = 0.5 + rng.uniform();            // [0.5, 1.5)
    for (auto& r : id.radii) r = 0.08 + 0.12 * rng.uniform();      // [0.08, 0.2)
    return id;
}

PoseSpec gen_pose(std::uint64_t seed, std::size_t k) {
    if (k < 2) throw ContractError("gen_pose: K must be at least 2");
    SplitMix64 rng(seed);
    PoseSpec p;
    p.angles.resize(k - 1);
    for (auto& a : p.angles) a = (2.0 * rng.uniform() - 1.0) * 0.5 * kPi;
    return p;
}

std::vector<std::array<double, 3>> fk_joint_positions(const IdentitySpec& identity,
                                                      const PoseSpec& pose) {
    identity.validate();
    if (pose.angles.size() + 1 != identity.link_count())
        throw ContractError("fk: pose has " + std::to_string(pose.angles.size()) +
                            " angles for " + std::to_string(identity.link_count()) + " limbs");
    const auto bones = bone_transforms(identity, pose);
    std::vector<std::array<double, 3>> pts;
    double offset = 0.0;
    pts.push_back({0, 0, 0});
    for (std::size_t b = 0; b < identity.link_count(); ++b) {
        offset += identity.lengths[b];
        pts.push_back(bones[b].apply({offset, 0, 0}));
    }
    return pts;
}

Mesh skin(const IdentitySpec& identity, const PoseSpec& pose) {
    identity.validate();
    pose.validate();
    const std::size_t k = identity.link_count();
    if (pose.angles.size() + 1 != k)
        throw ContractError("skin: pose has " + std::to_string(pose.angles.size()) +
                            " angles for " + std::to_string(k) + " limbs");

    const auto bones = bone_transforms(identity, pose);
    const std::size_t sa = identity.segments_around;

    // joint x-positions and blend half-widths in rest pose
    std::vector<double> joint_x(k + 1, 0.0);
    for (std::size_t b = 0; b < k; ++b) joint_x[b + 1] = joint_x[b] + identity.lengths[b];
    std::vector<double> band(k, 0.0); // band[j] around interior joint j (1..k−1)
    for (std::size_t j = 1; j < k; ++j)
        band[j] = kBlendBandFrac * std::min(identity.lengths[j - 1], identity.lengths[j]);

    auto transform_vertex = [&](std::size_t bone, const std::array<double, 3>& rest) {
        // weight of the neighbouring bone ramps linearly across the band
        if (bone > 0) {
            const double t = rest[0] - joint_x[bone]; // signed distance past proximal joint
            const double d = band[bone];
            if (t < d) {
                const double a = std::clamp((t + d) / (2.0 * d), 0.0, 1.0); // distal weight
                const auto p0 = bones[bone - 1].apply(rest);
                const auto p1 = bones[bone].apply(rest);
                return std::array<double, 3>{(1 - a) * p0[0] + a * p1[0],
                                             (1 - a) * p0[1] + a * p1[1],
                                             (1 - a) * p0[2] + a * p1[2]};
            }
        }
        if (bone + 1 < k) {
            const double t = rest[0] - joint_x[bone + 1]; // toward distal joint
            const double d = band[bone + 1];
            if (t > -d) {
                const double a = std::clamp((t + d) / (2.0 * d), 0.0, 1.0);
                const auto p0 = bones[bone].apply(rest);
                const auto p1 = bones[bone + 1].apply(rest);
                return std::array<double, 3>{(1 - a) * p0[0] + a * p1[0],
                                             (1 - a) * p0[1] + a * p1[1],
                                             (1 - a) * p0[2] + a * p1[2]};
            }
        }
        return bones[bone].apply(rest);
    };

    Mesh mesh;
    for (std::size_t b = 0; b < k; ++b) {
        const std::uint32_t base = static_cast<std::uint32_t>(mesh.vertex_count());
        const double x0 = joint_x[b];
        const double len = identity.lengths[b];
        const double r = identity.radii[b];
        const auto profile = capsule_profile(len, r, identity.segments_along);
        const std::size_t rings = profile.size();

        // bottom pole, rings bottom→top, top pole — order fixed by identity only
        mesh.vertices.push_back(transform_vertex(b, {x0 - r, 0, 0}));
        for (const auto& [px, pr] : profile)
            for (std::size_t s = 0; s < sa; ++s) {
                const double ang = 2.0 * kPi * static_cast<double>(s) / static_cast<double>(sa);
                mesh.vertices.push_back(
                    transform_vertex(b, {x0 + px, pr * std::cos(ang), pr * std::sin(ang)}));
            }
        mesh.vertices.push_back(transform_vertex(b, {x0 + len + r, 0, 0}));

        const auto ring_vertex = [&](std::size_t ring, std::size_t s) {
            return base + 1 + static_cast<std::uint32_t>(ring * sa + s % sa);
        };
        const std::uint32_t bottom_pole = base;
        const std::uint32_t top_pole = base + 1 + static_cast<std::uint32_t>(rings * sa);
        for (std::size_t s = 0; s < sa; ++s) // bottom fan
            mesh.faces.push_back({bottom_pole, ring_vertex(0, s + 1), ring_vertex(0, s)});
        for (std::size_t ring = 0; ring + 1 < rings; ++ring)
            for (std::size_t s = 0; s < sa; ++s) {
                const std::uint32_t a0 = ring_vertex(ring, s);
                const std::uint32_t a1 = ring_vertex(ring, s + 1);
                const std::uint32_t b0 = ring_vertex(ring + 1, s);
                const std::uint32_t b1 = ring_vertex(ring + 1, s + 1);
                mesh.faces.push_back({a0, a1, b1});
                mesh.faces.push_back({a0, b1, b0});
            }
        for (std::size_t s = 0; s < sa; ++s) // top fan
            mesh.faces.push_back({top_pole, ring_vertex(rings - 1, s), ring_vertex(rings - 1, s + 1)});
    }
    return mesh;
}

Triple make_triple(const IdentitySpec& id_a, const PoseSpec& pose_p, const IdentitySpec& id_b,
                   const PoseSpec& pose_q, std::uint64_t shuffle_seed) {
    if (id_a.link_count() != id_b.link_count())
        throw ContractError("make_triple: identities must share the limb count");
    Triple t;
    t.meta.shuffle_seed = shuffle_seed;
    t.source = shuffle_vertices(normalize_mesh(skin(id_a, pose_p)), mix_seed(shuffle_seed, 0)).mesh;
    // target and gt must stay vertex-aligned: one permutation for both
    const std::uint64_t tgt_perm_seed = mix_seed(shuffle_seed, 1);
    t.target = shuffle_vertices(normalize_mesh(skin(id_b, pose_q)), tgt_perm_seed).mesh;
    t.gt = shuffle_vertices(normalize_mesh(skin(id_b, pose_p)), tgt_perm_seed).mesh;
    return t;
}

std::vector<std::size_t> Dataset::split_indices(bool seen) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.triples.size(); ++i)
        if (manifest.triples[i].seen == seen) out.push_back(i);
    return out;
}

Dataset make_dataset(std::size_t n_identities, std::size_t n_poses, std::uint64_t seed,
                     std::size_t resolution, double unseen_frac, std::size_t chain_links) {
    if (n_identities < 1 || n_poses < 1)
        throw ContractError("make_dataset: counts must be at least 1");
    if (unseen_frac < 0.0 || unseen_frac > 1.0)
        throw ContractError("make_dataset: unseen fraction must lie in [0, 1]");

    Dataset ds;
    ds.manifest.n_identities = n_identities;
    ds.manifest.n_poses = n_poses;
    ds.manifest.chain_links = chain_links;
    ds.manifest.resolution = resolution;
    ds.manifest.seed = seed;
    ds.manifest.unseen_frac = unseen_frac;

    std::vector<IdentitySpec> ids;
    std::vector<PoseSpec> poses;
    for (std::size_t i = 0; i < n_identities; ++i)
        ids.push_back(gen_identity(mix_seed(seed, i), chain_links, resolution));
    for (std::size_t p = 0; p < n_poses; ++p)
        poses.push_back(gen_pose(mix_seed(seed, 0x10000 + p), chain_links));

    // last round(n_poses·frac) pose ids are held out
    const std::size_t n_unseen = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_poses) * unseen_frac));
    ds.manifest.pose_seen.assign(n_poses, true);
    for (std::size_t p = n_poses - n_unseen; p < n_poses; ++p) ds.manifest.pose_seen[p] = false;
    const std::size_t n_seen = n_poses - n_unseen;
    if (n_seen == 0) throw ContractError("make_dataset: no seen poses left to train on");

    SplitMix64 pick(mix_seed(seed, 0x30000));
    for (std::size_t t = 0; t < n_identities * n_poses; ++t) {
        TripleMeta meta;
        meta.index = t;
        meta.src_identity = t / n_poses;
        meta.src_pose = t % n_poses;
        meta.tgt_identity = pick.below(n_identities);
        meta.tgt_pose = pick.below(n_seen); // targets always come from seen poses
        meta.shuffle_seed = mix_seed(seed, 0x20000 + t);
        meta.seen = ds.manifest.pose_seen[meta.src_pose];
        Triple tr = make_triple(ids[meta.src_identity], poses[meta.src_pose],
                                ids[meta.tgt_identity], poses[meta.tgt_pose], meta.shuffle_seed);
        tr.meta = meta;
        ds.manifest.triples.push_back(meta);
        ds.triples.push_back(std::move(tr));
    }
    return ds;
}

namespace {

nlohmann::ordered_json meta_to_json(const TripleMeta& m) {
    nlohmann::ordered_json j;
    j["index"] = m.index;
    j["src_identity"] = m.src_identity;
    j["src_pose"] = m.src_pose;
    j["tgt_identity"] = m.tgt_identity;
    j["tgt_pose"] = m.tgt_pose;
    j["shuffle_seed"] = m.shuffle_seed;
    j["seen"] = m.seen;
    return j;
}

TripleMeta meta_from_json(const nlohmann::json& j) {
    TripleMeta m;
    m.index = j.at("index").get<std::size_t>();
    m.src_identity = j.at("src_identity").get<std::size_t>();
    m.src_pose = j.at("src_pose").get<std::size_t>();
    m.tgt_identity = j.at("tgt_identity").get<std::size_t>();
    m.tgt_pose = j.at("tgt_pose").get<std::size_t>();
    m.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
    m.seen = j.at("seen").get<bool>();
    return m;
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "triples", ec);
    if (ec) throw IoError("cannot create dataset directory '" + dir + "': " + ec.message());

    nlohmann::ordered_json j;
    j["n_identities"] = ds.manifest.n_identities;
    j["n_poses"] = ds.manifest.n_poses;
    j["chain_links"] = ds.manifest.chain_links;
    j["resolution"] = ds.manifest.resolution;
    j["seed"] = ds.manifest.seed;
    j["unseen_frac"] = ds.manifest.unseen_frac;
    j["pose_seen"] = std::vector<bool>(ds.manifest.pose_seen);
    j["triples"] = nlohmann::ordered_json::array();
    for (const auto& m : ds.manifest.triples) j["triples"].push_back(meta_to_json(m));

    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in '" + dir + "'");
    out << j.dump(2) << "\n";

    for (const auto& tr : ds.triples) {
        const fs::path tdir = fs::path(dir) / "triples" / std::to_string(tr.meta.index);
        fs::create_directories(tdir, ec);
        if (ec) throw IoError("cannot create '" + tdir.string() + "': " + ec.message());
        save_obj(tr.source, (tdir / "source.obj").string());
        save_obj(tr.target, (tdir / "target.obj").string());
        save_obj(tr.gt, (tdir / "gt.obj").string());
    }
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!in) throw IoError("cannot open manifest in '" + dir + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    Dataset ds;
    ds.manifest.n_identities = j.at("n_identities").get<std::size_t>();
    ds.manifest.n_poses = j.at("n_poses").get<std::size_t>();
    ds.manifest.chain_links = j.at("chain_links").get<std::size_t>();
    ds.manifest.resolution = j.at("resolution").get<std::size_t>();
    ds.manifest.seed = j.at("seed").get<std::uint64_t>();
    ds.manifest.unseen_frac = j.at("unseen_frac").get<double>();
    ds.manifest.pose_seen = j.at("pose_seen").get<std::vector<bool>>();
    for (const auto& tj : j.at("triples")) ds.manifest.triples.push_back(meta_from_json(tj));

    for (const auto& meta : ds.manifest.triples) {
        const fs::path tdir = fs::path(dir) / "triples" / std::to_string(meta.index);
        Triple tr;
        tr.meta = meta;
        tr.source = load_obj((tdir / "source.obj").string());
        tr.target = load_obj((tdir / "target.obj").string());
        tr.gt = load_obj((tdir / "gt.obj").string());
        ds.triples.push_back(std::move(tr));
    }
    return ds;
}

} // namespace dsffnet
