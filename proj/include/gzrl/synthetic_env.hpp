// Procedural desk-scale manipulation analog: multi-object glyph scenes,
// compositional "move to <target> <relation> <reference>" instructions,
// linear expert trajectories, an oracle gaze generator with anticipatory
// temporal structure, visual perturbations, and success evaluation.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/gaze_prior.hpp"
#include "gzrl/policy.hpp"
#include "gzrl/rng.hpp"
#include "gzrl/tensor.hpp"

namespace gzrl {

// Token vocabulary. Color and shape tokens are slot-specific (target vs
// reference); with a mean-pooled language query, shared tokens would make
// the two roles indistinguishable in the pooled embedding.
namespace vocab {
inline constexpr int kNumColors = 6;
inline constexpr int kNumShapes = 5;
inline constexpr int kNumRelations = 4; // left-of, right-of, above, below
inline constexpr std::uint16_t kTokMove = 0;
inline constexpr std::uint16_t kRelationBase = 1;
inline constexpr std::uint16_t kTargetColorBase = kRelationBase + kNumRelations; // 5
inline constexpr std::uint16_t kTargetShapeBase = kTargetColorBase + kNumColors; // 11
inline constexpr std::uint16_t kRefColorBase = kTargetShapeBase + kNumShapes;    // 16
inline constexpr std::uint16_t kRefShapeBase = kRefColorBase + kNumColors;       // 22
inline constexpr int kSize = kRefShapeBase + kNumShapes;                         // 27
inline constexpr int kInstrLen = 6;
} // namespace vocab

struct EnvConfig {
    int patch_grid = 8;  // P; N_v = 64 (paper-scale option: 16)
    int image_size = 32; // pixels per side; heatmaps share this resolution
    int views = 2;       // view k is the scene layout rotated 90 deg k times
    int objects = 4;     // target + reference + distractors
    int window = 2;      // T; gaze window holds 2T+1 frames
    int horizon = 8;
    int action_dim = 2;
    int proprio_dim = 2;
    double blob_sigma_patches = 0.75; // oracle blob sigma, in patch widths
    double gaze_floor = 0.01;

    int frames() const { return 2 * window + 2; } // gaze window plus training frame
    int gaze_frames() const { return 2 * window + 1; }

    void validate() const {
        if (patch_grid < 2) throw InvalidInputError("EnvConfig: patch_grid must be >= 2");
        if (image_size % patch_grid != 0)
            throw InvalidInputError("EnvConfig: image_size not divisible by patch_grid");
        if (views < 1) throw InvalidInputError("EnvConfig: views must be >= 1");
        if (objects < 2) throw InvalidInputError("EnvConfig: objects must be >= 2");
        if (objects > patch_grid * patch_grid)
            throw InvalidInputError("EnvConfig: object count exceeds grid capacity");
        if (window < 0) throw InvalidInputError("EnvConfig: window must be >= 0");
        if (horizon < 2) throw InvalidInputError("EnvConfig: horizon must be >= 2");
        if (action_dim != 2 || proprio_dim != 2)
            throw InvalidInputError("EnvConfig: actions and proprio are 2-D positions");
        if (!(blob_sigma_patches > 0.0)) throw InvalidInputError("EnvConfig: bad blob sigma");
        if (gaze_floor < 0.0) throw InvalidInputError("EnvConfig: negative gaze floor");
    }

    PolicyConfig policy_config(int embed_dim, int hidden_dim, int layers) const {
        PolicyConfig pc;
        pc.views = views;
        pc.image_size = image_size;
        pc.patch_grid = patch_grid;
        pc.vocab = vocab::kSize;
        pc.instr_len = vocab::kInstrLen;
        pc.proprio_dim = proprio_dim;
        pc.embed_dim = embed_dim;
        pc.hidden_dim = hidden_dim;
        pc.horizon = horizon;
        pc.action_dim = action_dim;
        pc.layers = layers;
        return pc;
    }

    bool operator==(const EnvConfig&) const = default;
};

struct SceneObject {
    int shape = 0;
    int color = 0;
    int row = 0;
    int col = 0;
};

struct SceneSpec {
    int patch_grid = 0;
    std::vector<SceneObject> objects;
    int target_index = 0;
    int reference_index = 0;
    int relation = 0;
    std::uint64_t seed = 0;

    const SceneObject& target() const { return objects[static_cast<std::size_t>(target_index)]; }
    const SceneObject& reference() const {
        return objects[static_cast<std::size_t>(reference_index)];
    }
};

// Relation geometry: the target sits at the reference patch plus this offset
// (row, col). Two patches apart on larger grids so a prior smeared across
// both objects produces a clearly wrong endpoint.
inline std::pair<int, int> relation_offset(int relation, int patch_grid) {
    const int step = patch_grid >= 5 ? 2 : 1;
    switch (relation) {
        case 0: return {0, -step}; // target left of reference
        case 1: return {0, step};  // right of
        case 2: return {-step, 0}; // above
        case 3: return {step, 0};  // below
        default: throw InvalidInputError("relation id out of range");
    }
}

// 4x4 glyph masks, one per shape id: ring, diamond, plus, diag cross, bars.
inline const std::array<std::array<std::uint8_t, 16>, vocab::kNumShapes>& glyph_masks() {
    static const std::array<std::array<std::uint8_t, 16>, vocab::kNumShapes> masks = {{
        {1, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 1},
        {0, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 0},
        {0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 0, 0, 1, 1, 0},
        {1, 0, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 1, 0, 0, 1},
        {1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0},
    }};
    return masks;
}

// Each color is a pair of intensities laid out in checkerboard phase inside
// the glyph. Pairs are non-proportional so distinct colors of the same shape
// are linearly separable in pixel space.
inline const std::array<std::pair<double, double>, vocab::kNumColors>& color_palette() {
    static const std::array<std::pair<double, double>, vocab::kNumColors> palette = {{
        {1.00, 0.25},
        {0.25, 1.00},
        {0.85, 0.85},
        {1.00, 0.60},
        {0.45, 0.95},
        {0.70, 0.30},
    }};
    return palette;
}

inline constexpr double kBackground = 0.1;

inline std::vector<std::uint16_t> scene_instruction(const SceneSpec& scene) {
    const SceneObject& t = scene.target();
    const SceneObject& r = scene.reference();
    return {vocab::kTokMove,
            static_cast<std::uint16_t>(vocab::kTargetColorBase + t.color),
            static_cast<std::uint16_t>(vocab::kTargetShapeBase + t.shape),
            static_cast<std::uint16_t>(vocab::kRelationBase + scene.relation),
            static_cast<std::uint16_t>(vocab::kRefColorBase + r.color),
            static_cast<std::uint16_t>(vocab::kRefShapeBase + r.shape)};
}

// Deterministic scene generation. Object 0 is the target, object 1 the
// reference; their (color, shape) pairs are unique in the scene so the
// instruction identifies them unambiguously. Distractor appearance pairs may
// repeat once the pair pool is exhausted (full-grid scenes).
inline SceneSpec generate_scene(std::uint64_t seed, const EnvConfig& cfg) {
    cfg.validate();
    const int p = cfg.patch_grid;
    Rng rng(mix_seed(seed, stream::kScene));

    SceneSpec scene;
    scene.patch_grid = p;
    scene.seed = seed;
    scene.relation = static_cast<int>(rng.below(vocab::kNumRelations));
    const auto [dr, dc] = relation_offset(scene.relation, p);

    // Reference cells whose induced target cell stays in bounds.
    std::vector<std::pair<int, int>> candidates;
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) {
            const int tr = r + dr, tc = c + dc;
            if (tr >= 0 && tr < p && tc >= 0 && tc < p) candidates.emplace_back(r, c);
        }
    const auto [ref_r, ref_c] = candidates[rng.below(candidates.size())];
    const int tgt_r = ref_r + dr, tgt_c = ref_c + dc;

    // Remaining free cells, partially shuffled for the distractors.
    std::vector<std::pair<int, int>> free_cells;
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
            if (!((r == ref_r && c == ref_c) || (r == tgt_r && c == tgt_c)))
                free_cells.emplace_back(r, c);
    for (std::size_t i = free_cells.size(); i > 1; --i)
        std::swap(free_cells[i - 1], free_cells[rng.below(i)]);

    // Distinct (color, shape) pairs while the pool lasts.
    const int pair_pool = vocab::kNumColors * vocab::kNumShapes;
    std::vector<int> pairs(static_cast<std::size_t>(pair_pool));
    for (int i = 0; i < pair_pool; ++i) pairs[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = pairs.size(); i > 1; --i)
        std::swap(pairs[i - 1], pairs[rng.below(i)]);

    auto appearance = [&](int index) {
        const int pair = pairs[static_cast<std::size_t>(index % pair_pool)];
        return std::pair<int, int>{pair % vocab::kNumColors, pair / vocab::kNumColors};
    };

    for (int i = 0; i < cfg.objects; ++i) {
        const auto [color, shape] = appearance(i);
        SceneObject obj{shape, color, 0, 0};
        if (i == 0) {
            obj.row = tgt_r;
            obj.col = tgt_c;
        } else if (i == 1) {
            obj.row = ref_r;
            obj.col = ref_c;
        } else {
            obj.row = free_cells[static_cast<std::size_t>(i - 2)].first;
            obj.col = free_cells[static_cast<std::size_t>(i - 2)].second;
        }
        scene.objects.push_back(obj);
    }
    scene.target_index = 0;
    scene.reference_index = 1;
    return scene;
}

// View k sees the layout rotated 90 degrees k times: (r, c) -> (c, P-1-r).
inline std::pair<int, int> rotate_patch(int row, int col, int patch_grid, int turns) {
    for (int t = 0; t < turns; ++t) {
        const int nr = col;
        const int nc = patch_grid - 1 - row;
        row = nr;
        col = nc;
    }
    return {row, col};
}

inline Matrix render_view(const SceneSpec& scene, const EnvConfig& cfg, int view) {
    const int p = cfg.patch_grid;
    const int edge = cfg.image_size / p;
    Matrix img(static_cast<std::size_t>(cfg.image_size), static_cast<std::size_t>(cfg.image_size),
               kBackground);
    for (const SceneObject& obj : scene.objects) {
        const auto [row, col] = rotate_patch(obj.row, obj.col, p, view);
        const auto& mask = glyph_masks()[static_cast<std::size_t>(obj.shape)];
        const auto [hi, lo] = color_palette()[static_cast<std::size_t>(obj.color)];
        for (int y = 0; y < edge; ++y)
            for (int x = 0; x < edge; ++x) {
                const int my = y * 4 / edge, mx = x * 4 / edge;
                if (!mask[static_cast<std::size_t>(my * 4 + mx)]) continue;
                img(static_cast<std::size_t>(row * edge + y),
                    static_cast<std::size_t>(col * edge + x)) = ((y + x) % 2 == 0) ? hi : lo;
            }
    }
    return img;
}

// Normalized (x, y) center of a patch in a given view's frame.
inline std::pair<double, double> patch_center(int row, int col, int patch_grid) {
    return {(col + 0.5) / patch_grid, (row + 0.5) / patch_grid};
}

// Linear interpolation from the start position to the target patch center in
// view-0 coordinates; the final step lands exactly on the target center.
inline ActionSequence expert_actions(const SceneSpec& scene, const EnvConfig& cfg,
                                     const std::vector<double>& start) {
    if (start.size() != 2) throw ShapeError("expert_actions: start must be 2-D");
    const auto [tx, ty] = patch_center(scene.target().row, scene.target().col, scene.patch_grid);
    ActionSequence seq{cfg.horizon, cfg.action_dim,
                       std::vector<double>(static_cast<std::size_t>(cfg.horizon) * 2)};
    for (int k = 0; k < cfg.horizon; ++k) {
        const double u = static_cast<double>(k + 1) / cfg.horizon;
        seq.at(k, 0) = start[0] * (1.0 - u) + tx * u;
        seq.at(k, 1) = start[1] * (1.0 - u) + ty * u;
    }
    return seq;
}

// Oracle gaze for frame offset delta in [-T, T]: two isotropic Gaussian blobs
// at the reference and target patch centers plus a small uniform floor. The
// mixing weight shifts linearly from (0.7 reference, 0.3 target) at -T to
// (0.2, 0.8) at +T -- early fixation on the reference, anticipatory shift to
// the target.
inline GazeHeatmap oracle_gaze(const SceneSpec& scene, const EnvConfig& cfg, int delta, int view) {
    if (delta < -cfg.window || delta > cfg.window)
        throw InvalidInputError("oracle_gaze: frame offset outside window");
    const int p = cfg.patch_grid;
    const int edge = cfg.image_size / p;
    const double sigma = cfg.blob_sigma_patches * edge;
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    const double phase =
        cfg.window == 0 ? 0.5 : (static_cast<double>(delta) + cfg.window) / (2.0 * cfg.window);
    const double w_ref = 0.7 + phase * (0.2 - 0.7);
    const double w_tgt = 0.3 + phase * (0.8 - 0.3);

    const auto [tr_, tc_] =
        rotate_patch(scene.target().row, scene.target().col, p, view);
    const auto [rr_, rc_] =
        rotate_patch(scene.reference().row, scene.reference().col, p, view);
    const double tgt_cx = (tc_ + 0.5) * edge, tgt_cy = (tr_ + 0.5) * edge;
    const double ref_cx = (rc_ + 0.5) * edge, ref_cy = (rr_ + 0.5) * edge;

    GazeHeatmap h{static_cast<std::size_t>(cfg.image_size),
                  static_cast<std::size_t>(cfg.image_size),
                  std::vector<double>(static_cast<std::size_t>(cfg.image_size) * cfg.image_size)};
    for (int y = 0; y < cfg.image_size; ++y)
        for (int x = 0; x < cfg.image_size; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double dt = (px - tgt_cx) * (px - tgt_cx) + (py - tgt_cy) * (py - tgt_cy);
            const double dr2 = (px - ref_cx) * (px - ref_cx) + (py - ref_cy) * (py - ref_cy);
            h.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                w_tgt * std::exp(-dt * inv_two_sigma2) + w_ref * std::exp(-dr2 * inv_two_sigma2) +
                cfg.gaze_floor;
        }
    return h;
}

enum class PerturbKind { kLighting, kCameraNoise, kFoveate };

inline PerturbKind perturb_kind_from_string(const std::string& s) {
    if (s == "lighting") return PerturbKind::kLighting;
    if (s == "camera_noise" || s == "camera-noise") return PerturbKind::kCameraNoise;
    if (s == "foveate") return PerturbKind::kFoveate;
    throw InvalidInputError("unknown perturbation kind: " + s);
}

inline const char* perturb_kind_to_string(PerturbKind k) {
    switch (k) {
        case PerturbKind::kLighting: return "lighting";
        case PerturbKind::kCameraNoise: return "camera_noise";
        case PerturbKind::kFoveate: return "foveate";
    }
    throw InvalidInputError("unknown perturbation kind");
}

inline Matrix box_blur3(const Matrix& img) {
    const auto h = img.rows(), w = img.cols();
    Matrix out(h, w);
    auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t lo, std::ptrdiff_t hi) {
        return v < lo ? lo : (v > hi ? hi : v);
    };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto yy = static_cast<std::size_t>(
                        clampi(static_cast<std::ptrdiff_t>(y) + dy, 0,
                               static_cast<std::ptrdiff_t>(h) - 1));
                    const auto xx = static_cast<std::size_t>(
                        clampi(static_cast<std::ptrdiff_t>(x) + dx, 0,
                               static_cast<std::ptrdiff_t>(w) - 1));
                    acc += img(yy, xx);
                }
            out(y, x) = acc / 9.0;
        }
    return out;
}

// Visual perturbations. magnitude semantics: lighting -> per-view brightness
// factor drawn uniformly in (1 +- magnitude); camera_noise -> per-pixel
// Gaussian sigma; foveate -> severity in [0,1], where the preserved radius
// around the gaze peak shrinks from the full diagonal (0: identity) to zero
// (1: fully blurred periphery). fovea_peaks gives the per-view gaze peak in
// pixel coordinates (x, y) and is required for foveation.
inline Observation perturb(const Observation& obs, PerturbKind kind, double magnitude,
                           std::uint64_t seed,
                           const std::vector<std::pair<double, double>>& fovea_peaks = {}) {
    if (magnitude < 0.0) throw InvalidInputError("perturb: magnitude must be >= 0");
    Observation out = obs;
    Rng rng(mix_seed(seed, stream::kPerturb));
    switch (kind) {
        case PerturbKind::kLighting: {
            for (Matrix& img : out.views) {
                const double factor = 1.0 + rng.uniform(-magnitude, magnitude);
                for (double& px : img.vec()) px = std::min(1.0, std::max(0.0, px * factor));
            }
            return out;
        }
        case PerturbKind::kCameraNoise: {
            for (Matrix& img : out.views)
                for (double& px : img.vec())
                    px = std::min(1.0, std::max(0.0, px + magnitude * rng.normal()));
            return out;
        }
        case PerturbKind::kFoveate: {
            if (magnitude == 0.0) return out;
            if (fovea_peaks.size() != out.views.size())
                throw InvalidInputError("perturb: foveation needs one gaze peak per view");
            const double severity = std::min(1.0, magnitude);
            for (std::size_t i = 0; i < out.views.size(); ++i) {
                Matrix& img = out.views[i];
                const double diag = std::sqrt(2.0) * static_cast<double>(img.rows());
                const double radius = (1.0 - severity) * diag;
                const Matrix blurred = box_blur3(box_blur3(img));
                const auto [cx, cy] = fovea_peaks[i];
                for (std::size_t y = 0; y < img.rows(); ++y)
                    for (std::size_t x = 0; x < img.cols(); ++x) {
                        const double dx = (static_cast<double>(x) + 0.5) - cx;
                        const double dy = (static_cast<double>(y) + 0.5) - cy;
                        if (std::sqrt(dx * dx + dy * dy) > radius) img(y, x) = blurred(y, x);
                    }
            }
            return out;
        }
    }
    throw InvalidInputError("unknown perturbation kind");
}

// True iff the final predicted position lies within half a patch width of the
// target patch center.
inline bool success(const ActionSequence& pred, const SceneSpec& scene) {
    if (pred.dim != 2 || pred.horizon < 1) throw ShapeError("success: expected h x 2 actions");
    const auto [tx, ty] = patch_center(scene.target().row, scene.target().col, scene.patch_grid);
    const double fx = pred.at(pred.horizon - 1, 0);
    const double fy = pred.at(pred.horizon - 1, 1);
    const double tol = 0.5 / scene.patch_grid;
    const double dx = fx - tx, dy = fy - ty;
    return dx * dx + dy * dy <= tol * tol;
}

// One training sample: the 2T+1 gaze-window frames plus the training frame,
// the expert trajectory, and per-frame per-view oracle heatmaps. The scene is
// static, so all frames share the same rendered views and proprio.
struct Episode {
    SceneSpec scene;
    std::vector<Observation> frames; // 2T+2 observations
    ActionSequence expert;
    std::vector<std::vector<GazeHeatmap>> gaze; // [frame in window][view], 2T+1 frames

    const Observation& train_obs() const { return frames.back(); }
};

inline Episode make_episode(std::uint64_t episode_seed, const EnvConfig& cfg) {
    Episode ep;
    ep.scene = generate_scene(episode_seed, cfg);
    Rng prng(mix_seed(episode_seed, stream::kProprio));
    std::vector<double> start{prng.uniform(), prng.uniform()};

    Observation obs;
    obs.views.reserve(static_cast<std::size_t>(cfg.views));
    for (int v = 0; v < cfg.views; ++v) obs.views.push_back(render_view(ep.scene, cfg, v));
    obs.instruction = scene_instruction(ep.scene);
    obs.proprio = start;
    ep.frames.assign(static_cast<std::size_t>(cfg.frames()), obs);

    ep.expert = expert_actions(ep.scene, cfg, start);

    ep.gaze.resize(static_cast<std::size_t>(cfg.gaze_frames()));
    for (int delta = -cfg.window; delta <= cfg.window; ++delta) {
        auto& per_view = ep.gaze[static_cast<std::size_t>(delta + cfg.window)];
        per_view.reserve(static_cast<std::size_t>(cfg.views));
        for (int v = 0; v < cfg.views; ++v) per_view.push_back(oracle_gaze(ep.scene, cfg, delta, v));
    }
    return ep;
}

struct Dataset {
    EnvConfig cfg;
    std::uint64_t seed = 0;
    std::vector<Episode> episodes;
};

// Per-episode seed = mix(global seed, episode index); two generations of the
// same config are identical.
inline Dataset generate_dataset(const EnvConfig& cfg, std::uint64_t seed, std::size_t count) {
    cfg.validate();
    Dataset ds;
    ds.cfg = cfg;
    ds.seed = seed;
    ds.episodes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) ds.episodes.push_back(make_episode(mix_seed(seed, i), cfg));
    return ds;
}

} // namespace gzrl
