#include "tflow/dump.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "tflow/errors.hpp"

namespace tflow {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'L', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNodes = 1u << 24;  // sanity bound on axis sizes

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated kernel file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated kernel file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_grid_fn(std::ostream& out, const GridFn1& f) {
  put_f64(out, f.g.t_max);
  put_u32(out, static_cast<std::uint32_t>(f.g.n));
  for (const SuperOp& s : f.v) {
    for (int i = 0; i < 256; ++i) put_f64(out, s.re[i]);
    for (int i = 0; i < 256; ++i) put_f64(out, s.im[i]);
  }
}

GridFn1 get_grid_fn(std::istream& in) {
  const double t_max = get_f64(in);
  const std::uint32_t n = get_u32(in);
  if (!(t_max > 0.0) || n < 2 || n > kMaxNodes) throw FormatError("bad time axis in kernel file");
  GridFn1 f(TimeGrid{t_max, static_cast<int>(n)});
  for (SuperOp& s : f.v) {
    for (int i = 0; i < 256; ++i) s.re[i] = get_f64(in);
    for (int i = 0; i < 256; ++i) s.im[i] = get_f64(in);
  }
  return f;
}

}  // namespace

void write_kernel_file(const std::string& path, const Snapshot& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_f64(out, s.theta);
  put_u32(out, static_cast<std::uint32_t>(s.temps.size()));
  for (double T : s.temps) put_f64(out, T);
  put_grid_fn(out, s.sigma);
  put_u32(out, static_cast<std::uint32_t>(s.sigma_I.size()));
  for (const auto& g : s.sigma_I) put_grid_fn(out, g);
  put_grid_fn(out, s.pi);
  if (!out) throw FormatError("short write to '" + path + "'");
}

Snapshot read_kernel_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a kernel file (bad magic)");
  const std::uint32_t ver = get_u32(in);
  if (ver != kVersion) throw FormatError("unsupported kernel file version");
  Snapshot s;
  s.theta = get_f64(in);
  const std::uint32_t nres = get_u32(in);
  if (nres > 64) throw FormatError("implausible reservoir count");
  s.temps.resize(nres);
  for (auto& T : s.temps) T = get_f64(in);
  s.sigma = get_grid_fn(in);
  const std::uint32_t nk = get_u32(in);
  if (nk != nres) throw FormatError("current kernel count mismatch");
  s.sigma_I.reserve(nk);
  for (std::uint32_t i = 0; i < nk; ++i) s.sigma_I.push_back(get_grid_fn(in));
  s.pi = get_grid_fn(in);
  in.peek();
  if (!in.eof()) throw FormatError("trailing bytes in kernel file");
  return s;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace tflow
