#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "amdm/errors.hpp"
#include "amdm/grid.hpp"
#include "amdm/kspace.hpp"

namespace amdm::io {

namespace fs = std::filesystem;

// ---- little-endian primitives -------------------------------------------------

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void expect_magic(const char* magic) {
    const std::size_t n = std::strlen(magic);
    if (bytes_.size() < n || bytes_.compare(0, n, magic) != 0)
      throw IoError(source_ + ": bad magic, expected \"" + magic + "\"");
    pos_ = n;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError(source_ + ": truncated file");
  }
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

// ---- files ---------------------------------------------------------------------

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a partially written file.
inline void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  static std::atomic<std::uint64_t> counter{0};
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
         std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

// ---- KSP1 ----------------------------------------------------------------------
// "KSP1", u32 height, u32 width, u32 channels, then C*H*W (re, im) f64 pairs,
// channel-major, row-major within a channel. All little-endian.

inline std::string encode_ksp1(const std::vector<ComplexGrid>& channels) {
  require(!channels.empty(), "KSP1 needs at least one channel");
  const auto h = channels.front().height(), w = channels.front().width();
  std::string out = "KSP1";
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(channels.size()));
  for (const auto& c : channels) {
    require(c.height() == h && c.width() == w, "KSP1 channels must share dimensions");
    for (const auto& v : c) {
      put_f64(out, v.real());
      put_f64(out, v.imag());
    }
  }
  return out;
}

inline std::vector<ComplexGrid> decode_ksp1(std::string bytes, const std::string& source = "<memory>") {
  ByteReader r(std::move(bytes), source);
  r.expect_magic("KSP1");
  const auto h = r.u32(), w = r.u32(), c = r.u32();
  if (h == 0 || w == 0 || c == 0) throw IoError(source + ": KSP1 header has a zero dimension");
  std::vector<ComplexGrid> out;
  for (std::uint32_t ch = 0; ch < c; ++ch) {
    std::vector<cplx> data(static_cast<std::size_t>(h) * w);
    for (auto& v : data) {
      const double re = r.f64();
      const double im = r.f64();
      v = {re, im};
    }
    try {
      out.emplace_back(h, w, std::move(data));
    } catch (const ValidationError& e) {
      throw IoError(source + ": " + e.what());
    }
  }
  if (!r.at_end()) throw IoError(source + ": trailing bytes after KSP1 payload");
  return out;
}

inline void write_ksp1(const fs::path& path, const std::vector<ComplexGrid>& channels) {
  write_file_atomic(path, encode_ksp1(channels));
}

inline void write_ksp1(const fs::path& path, const ComplexGrid& grid) { write_ksp1(path, std::vector{grid}); }

inline std::vector<ComplexGrid> read_ksp1(const fs::path& path) { return decode_ksp1(read_file(path), path.string()); }

inline ComplexGrid read_ksp1_single(const fs::path& path) {
  auto v = read_ksp1(path);
  if (v.size() != 1) throw IoError(path.string() + ": expected a single-channel KSP1 file");
  return std::move(v.front());
}

inline ComplexGrid binary_to_complex(const BinaryGrid& m) {
  ComplexGrid out(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
  return out;
}

inline BinaryGrid complex_to_binary(const ComplexGrid& g, const std::string& source) {
  BinaryGrid out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == cplx{1.0, 0.0}) out[i] = 1;
    else if (g[i] == cplx{}) out[i] = 0;
    else throw IoError(source + ": mask entries must be 0 or 1");
  }
  return out;
}

// ---- P5 graymap (maxval 1) -------------------------------------------------------

inline std::string encode_p5(const BinaryGrid& m) {
  std::string out = "P5\n" + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n1\n";
  for (auto v : m) out.push_back(static_cast<char>(v ? 1 : 0));
  return out;
}

inline BinaryGrid decode_p5(const std::string& bytes, const std::string& source) {
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 1) throw IoError(source + ": expected a P5 graymap with maxval 1");
  in.get();
  std::vector<std::uint8_t> data(w * h);
  for (auto& v : data) {
    const int c = in.get();
    if (c == EOF) throw IoError(source + ": truncated P5 payload");
    if (c > 1) throw IoError(source + ": P5 mask value exceeds maxval");
    v = static_cast<std::uint8_t>(c);
  }
  return BinaryGrid(h, w, std::move(data));
}

inline void write_p5(const fs::path& path, const BinaryGrid& m) { write_file_atomic(path, encode_p5(m)); }

/// Reads a sampling mask from KSP1 or P5 (by content).
inline SamplingMask read_sampling_mask(const fs::path& path) {
  std::string bytes = read_file(path);
  if (bytes.rfind("P5", 0) == 0) return SamplingMask(decode_p5(bytes, path.string()));
  auto g = decode_ksp1(std::move(bytes), path.string());
  if (g.size() != 1) throw IoError(path.string() + ": mask file must have one channel");
  return SamplingMask(complex_to_binary(g.front(), path.string()));
}

// ---- key = value text (manifests, config) ------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline std::string encode_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("line " + std::to_string(lineno) + ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

// Round-trippable decimal representation.
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace amdm::io
