// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. All integers are little-endian.
//
// Cube file:
//   "HSC1" | u32 S | u32 H | u32 W | u32 dtype (0 = float32) | S*H*W float32
//   payload, band-major then row-major.
//
// Checkpoint:
//   "PZCK" | u32 version | str config | u32 tensor count |
//   per tensor: str name | u64 n | n f32 value | n f32 adam m | n f32 adam v
//   | u64 adam step | u64 iteration | str rng state | u64 history length |
//   per record: u64 iteration, f64 lr, loss, term1, term2, psnr
// where str is u32 byte length followed by UTF-8 bytes.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "pzres/config.hpp"
#include "pzres/error.hpp"
#include "pzres/metrics.hpp"
#include "pzres/tensor.hpp"
#include "pzres/trainer.hpp"

namespace pzres {

namespace io {

inline constexpr std::uint32_t kDtypeFloat32 = 0;
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }
    template <typename T>
    void f32_array(std::span<const T> values) {
        for (T v : values) f32(static_cast<float>(v));
    }

    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

    std::uint32_t u32() {
        const auto* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const auto* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string raw(std::size_t n) {
        const auto* p = take(n);
        return std::string(p, n);
    }
    std::string str() { return raw(u32()); }
    std::vector<float> f32_array(std::uint64_t n) {
        if (n > remaining() / 4) fail("truncated array");
        std::vector<float> out(n);
        for (auto& v : out) v = f32();
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    [[noreturn]] void fail(const std::string& what) const { throw InputError(source_ + ": " + what); }

private:
    const char* take(std::size_t n) {
        if (n > remaining()) fail("unexpected end of file");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::string bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "' for reading");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace io

// ---------------------------------------------------------------------------
// Cubes.

template <typename T>
std::string encode_cube(const HsiCube<T>& cube) {
    if (cube.batch() != 1) throw ConfigError("encode_cube: cube files hold a single batch");
    io::Writer w;
    w.raw("HSC1");
    w.u32(static_cast<std::uint32_t>(cube.channels()));
    w.u32(static_cast<std::uint32_t>(cube.height()));
    w.u32(static_cast<std::uint32_t>(cube.width()));
    w.u32(io::kDtypeFloat32);
    w.f32_array<T>(cube.values());
    return w.bytes();
}

inline HsiCube<float> decode_cube(std::string bytes, const std::string& source = "cube") {
    io::Reader r(std::move(bytes), source);
    if (r.remaining() < 20 || r.raw(4) != "HSC1") r.fail("not a cube file (bad magic)");
    const std::uint32_t S = r.u32(), H = r.u32(), W = r.u32(), dtype = r.u32();
    if (dtype != io::kDtypeFloat32) r.fail("unsupported dtype code " + std::to_string(dtype));
    if (S == 0 || H == 0 || W == 0) r.fail("zero-sized cube");
    const std::uint64_t count = std::uint64_t{S} * H * W;
    if (r.remaining() != count * 4) {
        r.fail("payload is " + std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(count * 4));
    }
    HsiCube<float> cube = make_cube<float>(S, H, W);
    for (auto& v : cube.values()) v = r.f32();
    return cube;
}

template <typename T>
void write_cube(const std::string& path, const HsiCube<T>& cube) {
    io::write_file(path, encode_cube(cube));
}

inline HsiCube<float> read_cube(const std::string& path) { return decode_cube(io::read_file(path), path); }

// ---------------------------------------------------------------------------
// Checkpoints.

struct Checkpoint {
    NetworkConfig network;
    TrainConfig train;
    TrainerState state;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
    RunConfig rc;
    write_config(rc, ck.network);
    write_config(rc, ck.train);
    const auto& s = ck.state;
    io::Writer w;
    w.raw("PZCK");
    w.u32(io::kCheckpointVersion);
    w.str(rc.serialize());
    w.u32(static_cast<std::uint32_t>(s.names.size()));
    for (std::size_t i = 0; i < s.names.size(); ++i) {
        w.str(s.names[i]);
        w.u64(s.values[i].size());
        w.f32_array<float>(s.values[i]);
        w.f32_array<float>(s.adam_m[i]);
        w.f32_array<float>(s.adam_v[i]);
    }
    w.u64(s.adam_step);
    w.u64(s.iteration);
    w.str(s.rng_state);
    w.u64(s.history.size());
    for (const auto& h : s.history) {
        w.u64(h.iteration);
        w.f64(h.lr);
        w.f64(h.loss);
        w.f64(h.term1);
        w.f64(h.term2);
        w.f64(h.psnr);
    }
    return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string bytes, const std::string& source = "checkpoint") {
    io::Reader r(std::move(bytes), source);
    if (r.remaining() < 8 || r.raw(4) != "PZCK") r.fail("not a checkpoint (bad magic)");
    if (const auto v = r.u32(); v != io::kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(v));

    std::set<std::string> allowed = keys::network();
    allowed.insert(keys::train().begin(), keys::train().end());
    const RunConfig rc = RunConfig::parse_string(r.str(), allowed, source + " (embedded config)");
    Checkpoint ck{network_config_from(rc), train_config_from(rc), {}};

    auto& s = ck.state;
    const std::uint32_t tensors = r.u32();
    for (std::uint32_t i = 0; i < tensors; ++i) {
        s.names.push_back(r.str());
        const std::uint64_t n = r.u64();
        s.values.push_back(r.f32_array(n));
        s.adam_m.push_back(r.f32_array(n));
        s.adam_v.push_back(r.f32_array(n));
    }
    s.adam_step = r.u64();
    s.iteration = r.u64();
    s.rng_state = r.str();
    const std::uint64_t records = r.u64();
    if (records > r.remaining() / 48) r.fail("truncated history");
    for (std::uint64_t i = 0; i < records; ++i) {
        HistoryRecord h;
        h.iteration = r.u64();
        h.lr = r.f64();
        h.loss = r.f64();
        h.term1 = r.f64();
        h.term2 = r.f64();
        h.psnr = r.f64();
        s.history.push_back(h);
    }
    if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { io::write_file(path, encode_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path), path); }

inline Checkpoint make_checkpoint(const Trainer& t) {
    return {t.network().config(), t.config(), t.state()};
}

/// Network with the checkpoint's configuration and parameter values.
inline Network<float> network_from_checkpoint(const Checkpoint& ck) {
    Network<float> net(ck.network);
    Trainer::load_parameters(net, ck.state.names, ck.state.values);
    return net;
}

// ---------------------------------------------------------------------------
// Text and image outputs.

/// Binary PGM (P5), maxval 255.
inline std::string encode_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

inline void write_pgm(const std::string& path, const GrayImage& img) { io::write_file(path, encode_pgm(img)); }

inline constexpr const char* kHistoryHeader = "iter,lr,loss,term1,term2,psnr";

/// `iter,lr,loss,term1,term2,psnr`; psnr is empty on rows without evaluation.
inline std::string format_history(const std::vector<HistoryRecord>& history) {
    std::string out = std::string(kHistoryHeader) + "\n";
    for (const auto& h : history) {
        out += std::to_string(h.iteration) + "," + format_double(h.lr) + "," + format_double(h.loss) + "," +
               format_double(h.term1) + "," + format_double(h.term2) + "," +
               (std::isnan(h.psnr) ? std::string() : format_double(h.psnr)) + "\n";
    }
    return out;
}

inline constexpr const char* kReportHeader = "metric,value";

/// Rows psnr, assim, sam, ergas, then psnr_band_<k> for every band.
inline std::string format_report_csv(const MetricReport& r) {
    std::string out = std::string(kReportHeader) + "\n";
    out += "psnr," + format_double(r.psnr) + "\n";
    out += "assim," + format_double(r.assim) + "\n";
    out += "sam," + format_double(r.sam) + "\n";
    out += "ergas," + format_double(r.ergas) + "\n";
    for (std::size_t k = 0; k < r.band_psnr.size(); ++k) {
        out += "psnr_band_" + std::to_string(k) + "," + format_double(r.band_psnr[k]) + "\n";
    }
    return out;
}

}  // namespace pzres
