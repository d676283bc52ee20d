#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rview/bcdiffusion.hpp"
#include "rview/dataset_io.hpp"
#include "rview/errors.hpp"

namespace rview {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'I', 'F'};
constexpr std::uint32_t kModelVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}
void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
void put_i64(std::ostream& out, long v) { put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
void put_f64s(std::ostream& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double x : v) put_f64(out, x);
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint64_t u64() {
        unsigned char b[8];
        take(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        take(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    int i32() { return static_cast<int>(static_cast<std::int32_t>(u32())); }
    double f64() { return std::bit_cast<double>(u64()); }
    long i64() { return static_cast<long>(static_cast<std::int64_t>(u64())); }
    std::vector<double> f64s(std::size_t expect_max) {
        const auto n = u64();
        if (n > expect_max) throw ParseError("model file: array length " + std::to_string(n) + " is implausible", 0);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    void take(unsigned char* b, std::size_t n) {
        in_.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("model file is truncated", 0);
    }

private:
    std::istream& in_;
};

}  // namespace

void write_model(std::ostream& out, const DiffusionModel& m) {
    const auto& c = m.config;
    out.write(kMagic, 4);
    put_u32(out, kModelVersion);
    for (int v : {static_cast<int>(m.encoding_size()), c.horizon, kActionDim, c.K, c.T_diff, c.hidden, c.hidden_layers,
                  c.time_embed, c.batch, c.epochs, c.ddim_steps, c.ddpm_tail_steps, c.sensor_offset_copies}) {
        put_u32(out, static_cast<std::uint32_t>(v));
    }
    for (double v : {c.beta_start, c.beta_end, c.lr, c.clip_x0, c.max_train_seconds, c.sensor_offset_max, m.initial_loss}) put_f64(out, v);
    put_i64(out, m.padded_trajectories);
    put_i64(out, m.iterations);
    put_f64s(out, m.action_mean);
    put_f64s(out, m.action_std);
    put_f64s(out, m.enc_mean);
    put_f64s(out, m.enc_scale);
    put_f64s(out, m.loss_trace);
    const auto& sizes = m.net.sizes();
    put_u32(out, static_cast<std::uint32_t>(sizes.size()));
    for (int s : sizes) put_u32(out, static_cast<std::uint32_t>(s));
    for (double v : m.net.params()) put_f64(out, v);
    if (!out) throw Error("failed while writing the model");
}

void write_model(const std::filesystem::path& path, const DiffusionModel& m) {
    std::ostringstream buf(std::ios::binary);
    write_model(buf, m);
    write_file_atomic(path, buf.str());
}

DiffusionModel read_model(std::istream& in) {
    Reader r(in);
    unsigned char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a model file (bad magic)", 0);
    const auto version = r.u32();
    if (version != kModelVersion) {
        throw VersionError("model format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kModelVersion) + ")");
    }
    DiffusionModel m;
    auto& c = m.config;
    const int enc_dim = r.i32();
    c.horizon = r.i32();
    const int action_dim = r.i32();
    c.K = r.i32();
    c.T_diff = r.i32();
    c.hidden = r.i32();
    c.hidden_layers = r.i32();
    c.time_embed = r.i32();
    c.batch = r.i32();
    c.epochs = r.i32();
    c.ddim_steps = r.i32();
    c.ddpm_tail_steps = r.i32();
    c.sensor_offset_copies = r.i32();
    c.beta_start = r.f64();
    c.beta_end = r.f64();
    c.lr = r.f64();
    c.clip_x0 = r.f64();
    c.max_train_seconds = r.f64();
    c.sensor_offset_max = r.f64();
    m.initial_loss = r.f64();
    m.padded_trajectories = r.i64();
    m.iterations = r.i64();
    if (action_dim != kActionDim) throw ParseError("model action dimension must be 3", 0);
    if (c.K < 0 || enc_dim != static_cast<int>(encoding_dim(c.K))) {
        throw ParseError("model encoding dimension does not match K", 0);
    }
    try {
        c.validate();
    } catch (const PreconditionError& e) {
        throw ParseError(std::string("model header: ") + e.what(), 0);
    }
    m.schedule = NoiseSchedule(c.T_diff, c.beta_start, c.beta_end);
    constexpr std::size_t kMaxArray = std::size_t{1} << 28;
    m.action_mean = r.f64s(kMaxArray);
    m.action_std = r.f64s(kMaxArray);
    m.enc_mean = r.f64s(kMaxArray);
    m.enc_scale = r.f64s(kMaxArray);
    m.loss_trace = r.f64s(kMaxArray);
    if (m.action_mean.size() != kActionDim || m.action_std.size() != kActionDim ||
        m.enc_mean.size() != static_cast<std::size_t>(enc_dim) || m.enc_scale.size() != static_cast<std::size_t>(enc_dim)) {
        throw ParseError("model normalization statistics have the wrong size", 0);
    }
    const auto n_sizes = r.u32();
    if (n_sizes < 2 || n_sizes > 64) throw ParseError("model layer count is implausible", 0);
    std::vector<int> sizes;
    for (std::uint32_t i = 0; i < n_sizes; ++i) sizes.push_back(r.i32());
    const int expect_in = static_cast<int>(m.chunk_size()) + enc_dim + c.time_embed;
    if (sizes.front() != expect_in || sizes.back() != static_cast<int>(m.chunk_size())) {
        throw ParseError("model layer sizes do not match the header", 0);
    }
    for (int s : sizes) {
        if (s < 1 || s > (1 << 16)) throw ParseError("model layer size is implausible", 0);
    }
    Rng unused(0);
    m.net = Mlp(sizes, unused);
    std::vector<double> params(m.net.parameter_count());
    for (auto& v : params) v = r.f64();
    m.net.set_params(params);
    return m;
}

DiffusionModel read_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file " + path.string());
    return read_model(in);
}

}  // namespace rview
