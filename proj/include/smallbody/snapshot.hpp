#pragma once

// Field snapshot file format (little-endian throughout):
//   float64 L | uint32 N | uint8 components | float64 time
//   followed by components * N * N float64 samples, component-major, each component
//   row-major with rows along y (sample (i, j) at offset j * N + i).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "smallbody/grid.hpp"

namespace smallbody {

struct Snapshot {
  double time = 0.0;
  std::variant<ScalarField, VectorField> field;

  [[nodiscard]] const Grid& grid() const {
    return std::visit([](const auto& f) -> const Grid& { return f.grid(); }, field);
  }
  [[nodiscard]] int components() const { return std::holds_alternative<ScalarField>(field) ? 1 : 2; }
};

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(bytes[k], bytes[sizeof(T) - 1 - k]);
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get_le(const std::vector<unsigned char>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("snapshot truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(bytes[k], bytes[sizeof(T) - 1 - k]);
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline constexpr std::size_t kSnapshotHeaderBytes = 8 + 4 + 1 + 8;

inline std::vector<unsigned char> encode_snapshot(const Snapshot& s) {
  const Grid& g = s.grid();
  std::vector<unsigned char> out;
  out.reserve(kSnapshotHeaderBytes + 8 * g.size() * s.components());
  detail::put_le<double>(out, g.L);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.N));
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.components()));
  detail::put_le<double>(out, s.time);
  auto put_field = [&](const ScalarField& f) {
    for (double v : f.data()) detail::put_le<double>(out, v);
  };
  if (const auto* sf = std::get_if<ScalarField>(&s.field)) {
    put_field(*sf);
  } else {
    const auto& vf = std::get<VectorField>(s.field);
    put_field(vf.x);
    put_field(vf.y);
  }
  return out;
}

inline Snapshot decode_snapshot(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  const double side = detail::get_le<double>(bytes, pos);
  const auto n = detail::get_le<std::uint32_t>(bytes, pos);
  const auto comps = detail::get_le<std::uint8_t>(bytes, pos);
  const double time = detail::get_le<double>(bytes, pos);
  const Grid g = Grid::make(side, static_cast<int>(n));
  if (comps != 1 && comps != 2) throw ValidationError("snapshot must have 1 or 2 components", comps);
  if (bytes.size() != kSnapshotHeaderBytes + 8 * g.size() * comps)
    throw ValidationError("snapshot payload size does not match its header",
                          static_cast<double>(bytes.size()));
  auto get_field = [&]() {
    ScalarField f(g);
    for (double& v : f.data()) v = detail::get_le<double>(bytes, pos);
    return f;
  };
  Snapshot s;
  s.time = time;
  if (comps == 1) {
    s.field = get_field();
  } else {
    ScalarField x = get_field();
    ScalarField y = get_field();
    s.field = VectorField(std::move(x), std::move(y));
  }
  return s;
}

/// Writes to `path` atomically (temporary file, then rename).
inline void write_bytes_atomic(const std::filesystem::path& path,
                               const std::vector<unsigned char>& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_bytes_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

inline void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  write_bytes_atomic(path, encode_snapshot(s));
}

inline Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open snapshot: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

}  // namespace smallbody
