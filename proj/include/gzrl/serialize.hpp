// Binary container formats (dataset, checkpoint), PGM export, and the
// little-endian primitives they share. Tensors are stored as single-precision
// row-major with u32 shape headers; training-path arithmetic stays double.
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/gaze_prior.hpp"
#include "gzrl/policy.hpp"
#include "gzrl/synthetic_env.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace gzrl {

inline constexpr char kDatasetMagic[] = "GZRL-DATA";
inline constexpr char kCheckpointMagic[] = "GZRL-CKPT";
inline constexpr std::uint32_t kFormatVersion = 1;

// ---- primitive writers/readers -------------------------------------------

class BinWriter {
public:
    explicit BinWriter(std::ostream& os) : os_(os) {}

    void bytes(const void* p, std::size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!os_) throw IoError("write failed");
    }
    void u16(std::uint16_t v) { bytes(&v, sizeof v); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f32(float v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    // f32 tensor with a u32 rank/dims header
    void tensor(const std::vector<std::uint32_t>& dims, const std::vector<double>& data) {
        u32(static_cast<std::uint32_t>(dims.size()));
        std::size_t expect = 1;
        for (std::uint32_t d : dims) {
            u32(d);
            expect *= d;
        }
        if (expect != data.size()) throw ShapeError("tensor write: dims/data mismatch");
        for (double v : data) f32(static_cast<float>(v));
    }

private:
    std::ostream& os_;
};

class BinReader {
public:
    explicit BinReader(std::istream& is) : is_(is) {}

    std::size_t offset() const { return offset_; }

    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw IoError("unexpected end of file at offset " + std::to_string(offset_));
        offset_ += n;
    }
    std::uint16_t u16() { std::uint16_t v; bytes(&v, sizeof v); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, sizeof v); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, sizeof v); return v; }
    float f32() { float v; bytes(&v, sizeof v); return v; }
    double f64() { double v; bytes(&v, sizeof v); return v; }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw IoError("string too long at offset " + std::to_string(offset_));
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<std::uint32_t> tensor_dims() {
        const std::uint32_t rank = u32();
        if (rank > 8) throw IoError("tensor rank too large at offset " + std::to_string(offset_));
        std::vector<std::uint32_t> dims(rank);
        for (auto& d : dims) d = u32();
        return dims;
    }
    std::vector<double> tensor_data(const std::vector<std::uint32_t>& dims) {
        std::size_t n = 1;
        for (std::uint32_t d : dims) n *= d;
        std::vector<double> out(n);
        for (double& v : out) v = static_cast<double>(f32());
        return out;
    }

private:
    std::istream& is_;
    std::size_t offset_ = 0;
};

// Writes through a temp file and renames, so an interrupted run never leaves
// a partially written artifact at the destination.
template <typename Fn>
void atomic_write(const std::string& path, Fn&& writer) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + tmp);
        writer(os);
        os.flush();
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

// ---- env config block ------------------------------------------------------

inline void write_env_config(BinWriter& w, const EnvConfig& cfg) {
    w.u32(static_cast<std::uint32_t>(cfg.patch_grid));
    w.u32(static_cast<std::uint32_t>(cfg.image_size));
    w.u32(static_cast<std::uint32_t>(cfg.views));
    w.u32(static_cast<std::uint32_t>(cfg.objects));
    w.u32(static_cast<std::uint32_t>(cfg.window));
    w.u32(static_cast<std::uint32_t>(cfg.horizon));
    w.u32(static_cast<std::uint32_t>(cfg.action_dim));
    w.u32(static_cast<std::uint32_t>(cfg.proprio_dim));
    w.f32(static_cast<float>(cfg.blob_sigma_patches));
    w.f32(static_cast<float>(cfg.gaze_floor));
}

inline EnvConfig read_env_config(BinReader& r) {
    EnvConfig cfg;
    cfg.patch_grid = static_cast<int>(r.u32());
    cfg.image_size = static_cast<int>(r.u32());
    cfg.views = static_cast<int>(r.u32());
    cfg.objects = static_cast<int>(r.u32());
    cfg.window = static_cast<int>(r.u32());
    cfg.horizon = static_cast<int>(r.u32());
    cfg.action_dim = static_cast<int>(r.u32());
    cfg.proprio_dim = static_cast<int>(r.u32());
    cfg.blob_sigma_patches = static_cast<double>(r.f32());
    cfg.gaze_floor = static_cast<double>(r.f32());
    return cfg;
}

// ---- dataset container -----------------------------------------------------
//
// magic "GZRL-DATA" | version u32 | env config | global seed u64 |
// episode count u64 | episodes back-to-back. Per episode: scene spec,
// instruction (u16 * N_l), proprio tensor, expert tensor, frame images
// ((2T+2) * views tensors), gaze heatmaps ((2T+1) * views tensors).

inline void write_episode(BinWriter& w, const Episode& ep, const EnvConfig& cfg) {
    w.u64(ep.scene.seed);
    w.u32(static_cast<std::uint32_t>(ep.scene.relation));
    w.u32(static_cast<std::uint32_t>(ep.scene.target_index));
    w.u32(static_cast<std::uint32_t>(ep.scene.reference_index));
    w.u32(static_cast<std::uint32_t>(ep.scene.objects.size()));
    for (const SceneObject& o : ep.scene.objects) {
        w.u32(static_cast<std::uint32_t>(o.shape));
        w.u32(static_cast<std::uint32_t>(o.color));
        w.u32(static_cast<std::uint32_t>(o.row));
        w.u32(static_cast<std::uint32_t>(o.col));
    }
    const Observation& obs = ep.frames.front();
    for (std::uint16_t tok : obs.instruction) w.u16(tok);
    w.tensor({static_cast<std::uint32_t>(cfg.proprio_dim)}, obs.proprio);
    w.tensor({static_cast<std::uint32_t>(cfg.horizon), static_cast<std::uint32_t>(cfg.action_dim)},
             ep.expert.values);
    for (const Observation& frame : ep.frames)
        for (const Matrix& img : frame.views)
            w.tensor({static_cast<std::uint32_t>(img.rows()), static_cast<std::uint32_t>(img.cols())},
                     img.vec());
    for (const auto& per_view : ep.gaze)
        for (const GazeHeatmap& h : per_view)
            w.tensor({static_cast<std::uint32_t>(h.height), static_cast<std::uint32_t>(h.width)},
                     h.values);
}

inline Episode read_episode(BinReader& r, const EnvConfig& cfg) {
    Episode ep;
    ep.scene.patch_grid = cfg.patch_grid;
    ep.scene.seed = r.u64();
    ep.scene.relation = static_cast<int>(r.u32());
    ep.scene.target_index = static_cast<int>(r.u32());
    ep.scene.reference_index = static_cast<int>(r.u32());
    const std::uint32_t n_obj = r.u32();
    for (std::uint32_t i = 0; i < n_obj; ++i) {
        SceneObject o;
        o.shape = static_cast<int>(r.u32());
        o.color = static_cast<int>(r.u32());
        o.row = static_cast<int>(r.u32());
        o.col = static_cast<int>(r.u32());
        ep.scene.objects.push_back(o);
    }
    Observation proto;
    proto.instruction.resize(static_cast<std::size_t>(vocab::kInstrLen));
    for (auto& tok : proto.instruction) tok = r.u16();
    {
        auto dims = r.tensor_dims();
        proto.proprio = r.tensor_data(dims);
    }
    {
        auto dims = r.tensor_dims();
        if (dims.size() != 2) throw IoError("expert tensor: bad rank at offset " +
                                            std::to_string(r.offset()));
        ep.expert.horizon = static_cast<int>(dims[0]);
        ep.expert.dim = static_cast<int>(dims[1]);
        ep.expert.values = r.tensor_data(dims);
    }
    for (int f = 0; f < cfg.frames(); ++f) {
        Observation frame = proto;
        frame.views.clear();
        for (int v = 0; v < cfg.views; ++v) {
            auto dims = r.tensor_dims();
            if (dims.size() != 2) throw IoError("image tensor: bad rank at offset " +
                                                std::to_string(r.offset()));
            Matrix img(dims[0], dims[1]);
            img.vec() = r.tensor_data(dims);
            frame.views.push_back(std::move(img));
        }
        ep.frames.push_back(std::move(frame));
    }
    ep.gaze.resize(static_cast<std::size_t>(cfg.gaze_frames()));
    for (auto& per_view : ep.gaze)
        for (int v = 0; v < cfg.views; ++v) {
            auto dims = r.tensor_dims();
            GazeHeatmap h{dims[0], dims[1], {}};
            h.values = r.tensor_data(dims);
            per_view.push_back(std::move(h));
        }
    return ep;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    atomic_write(path, [&](std::ostream& os) {
        BinWriter w(os);
        w.bytes(kDatasetMagic, sizeof(kDatasetMagic) - 1);
        w.u32(kFormatVersion);
        write_env_config(w, ds.cfg);
        w.u64(ds.seed);
        w.u64(static_cast<std::uint64_t>(ds.episodes.size()));
        for (const Episode& ep : ds.episodes) write_episode(w, ep, ds.cfg);
    });
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset: " + path);
    BinReader r(is);
    char magic[sizeof(kDatasetMagic) - 1];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
        throw IoError("bad dataset magic at offset 0");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.cfg = read_env_config(r);
    ds.cfg.validate();
    ds.seed = r.u64();
    const std::uint64_t count = r.u64();
    ds.episodes.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) ds.episodes.push_back(read_episode(r, ds.cfg));
    return ds;
}

// Closed-form size in bytes of a dataset file with the given config and
// episode count; the determinism tests pin the writer to this layout.
inline std::size_t dataset_file_size(const EnvConfig& cfg, std::size_t episodes) {
    const std::size_t header = (sizeof(kDatasetMagic) - 1) + 4 /*version*/ + (8 * 4 + 2 * 4) +
                               8 /*seed*/ + 8 /*count*/;
    const std::size_t tensor_hdr2 = 4 + 2 * 4; // rank + two dims
    const std::size_t tensor_hdr1 = 4 + 4;
    const std::size_t img = static_cast<std::size_t>(cfg.image_size) * cfg.image_size * 4;
    std::size_t per_episode = 8 + 4 * 4 + static_cast<std::size_t>(cfg.objects) * 4 * 4;
    per_episode += static_cast<std::size_t>(vocab::kInstrLen) * 2;
    per_episode += tensor_hdr1 + static_cast<std::size_t>(cfg.proprio_dim) * 4;
    per_episode += tensor_hdr2 + static_cast<std::size_t>(cfg.horizon) * cfg.action_dim * 4;
    per_episode += static_cast<std::size_t>(cfg.frames()) * cfg.views * (tensor_hdr2 + img);
    per_episode += static_cast<std::size_t>(cfg.gaze_frames()) * cfg.views * (tensor_hdr2 + img);
    return header + episodes * per_episode;
}

// ---- checkpoint ------------------------------------------------------------
//
// magic "GZRL-CKPT" | version u32 | policy config | env config | provenance
// (lambda f64, variant u32, attention source u32, seed u64) | tensor count
// u32 | per tensor: name, rank/dims, f32 data. Round-trips bit-exactly.

struct Checkpoint {
    PolicyParams params;
    EnvConfig env;
    double lambda = 0.0;
    VariantKind variant = VariantKind::kStructured;
    AttentionSource source = AttentionSource::kFinalLayer;
    std::uint64_t seed = 0;
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    atomic_write(path, [&](std::ostream& os) {
        BinWriter w(os);
        w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
        w.u32(kFormatVersion);
        const PolicyConfig& pc = ck.params.cfg;
        w.u32(static_cast<std::uint32_t>(pc.views));
        w.u32(static_cast<std::uint32_t>(pc.image_size));
        w.u32(static_cast<std::uint32_t>(pc.patch_grid));
        w.u32(static_cast<std::uint32_t>(pc.vocab));
        w.u32(static_cast<std::uint32_t>(pc.instr_len));
        w.u32(static_cast<std::uint32_t>(pc.proprio_dim));
        w.u32(static_cast<std::uint32_t>(pc.embed_dim));
        w.u32(static_cast<std::uint32_t>(pc.hidden_dim));
        w.u32(static_cast<std::uint32_t>(pc.horizon));
        w.u32(static_cast<std::uint32_t>(pc.action_dim));
        w.u32(static_cast<std::uint32_t>(pc.layers));
        write_env_config(w, ck.env);
        w.f64(ck.lambda);
        w.u32(static_cast<std::uint32_t>(ck.variant));
        w.u32(static_cast<std::uint32_t>(ck.source));
        w.u64(ck.seed);
        std::uint32_t count = 0;
        ck.params.for_each_tensor([&](const std::string&, const Matrix&) { ++count; });
        w.u32(count);
        ck.params.for_each_tensor([&](const std::string& name, const Matrix& m) {
            w.str(name);
            w.tensor({static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                     m.vec());
        });
    });
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    BinReader r(is);
    char magic[sizeof(kCheckpointMagic) - 1];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw IoError("bad checkpoint magic at offset 0");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    PolicyConfig pc;
    pc.views = static_cast<int>(r.u32());
    pc.image_size = static_cast<int>(r.u32());
    pc.patch_grid = static_cast<int>(r.u32());
    pc.vocab = static_cast<int>(r.u32());
    pc.instr_len = static_cast<int>(r.u32());
    pc.proprio_dim = static_cast<int>(r.u32());
    pc.embed_dim = static_cast<int>(r.u32());
    pc.hidden_dim = static_cast<int>(r.u32());
    pc.horizon = static_cast<int>(r.u32());
    pc.action_dim = static_cast<int>(r.u32());
    pc.layers = static_cast<int>(r.u32());
    pc.validate();
    ck.env = read_env_config(r);
    ck.lambda = r.f64();
    ck.variant = static_cast<VariantKind>(r.u32());
    ck.source = static_cast<AttentionSource>(r.u32());
    ck.seed = r.u64();

    ck.params = init_params(pc, 0); // layout only; values overwritten below
    const std::uint32_t count = r.u32();
    std::uint32_t expected = 0;
    ck.params.for_each_tensor([&](const std::string&, const Matrix&) { ++expected; });
    if (count != expected)
        throw IoError("checkpoint tensor count mismatch at offset " + std::to_string(r.offset()));
    ck.params.for_each_tensor([&](const std::string& name, Matrix& m) {
        const std::string stored = r.str();
        if (stored != name)
            throw IoError("checkpoint tensor '" + stored + "' unexpected (wanted '" + name +
                          "') at offset " + std::to_string(r.offset()));
        auto dims = r.tensor_dims();
        if (dims.size() != 2 || dims[0] != m.rows() || dims[1] != m.cols())
            throw IoError("checkpoint tensor '" + name + "' shape mismatch at offset " +
                          std::to_string(r.offset()));
        m.vec() = r.tensor_data(dims);
    });
    return ck;
}

// ---- PGM (P2, ASCII) -------------------------------------------------------

// Values scaled to 0-65535 by the grid maximum; an all-zero grid exports as
// all zeros.
inline std::string grid_to_pgm(const std::vector<double>& values, std::size_t height,
                               std::size_t width) {
    double mx = 0.0;
    for (double v : values) mx = std::max(mx, v);
    std::ostringstream os;
    os << "P2\n" << width << ' ' << height << "\n65535\n";
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double v = values[y * width + x];
            const long scaled = mx > 0.0 ? std::lround(v / mx * 65535.0) : 0;
            os << scaled << (x + 1 < width ? ' ' : '\n');
        }
    }
    return os.str();
}

inline std::string heatmap_to_pgm(const GazeHeatmap& h) {
    return grid_to_pgm(h.values, h.height, h.width);
}

inline GazeHeatmap pgm_to_heatmap(const std::string& text) {
    std::istringstream is(text);
    std::string magic;
    is >> magic;
    if (magic != "P2") throw IoError("PGM import: expected P2 header");
    std::size_t width = 0, height = 0;
    long maxval = 0;
    is >> width >> height >> maxval;
    if (!is || width == 0 || height == 0) throw IoError("PGM import: bad dimensions");
    GazeHeatmap h{height, width, std::vector<double>(width * height)};
    for (double& v : h.values) {
        long raw = 0;
        if (!(is >> raw)) throw IoError("PGM import: truncated pixel data");
        v = static_cast<double>(raw);
    }
    return h;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    atomic_write(path, [&](std::ostream& os) { os << content; });
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace gzrl
