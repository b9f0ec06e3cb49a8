// SPDX-License-Identifier: Apache-2.0
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "mpolstm/error.hpp"
#include "mpolstm/io.hpp"

namespace mpolstm {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'O', 'W'};
constexpr std::uint8_t kKindDense = 0;
constexpr std::uint8_t kKindMpo = 1;
constexpr std::uint8_t kDtypeF64 = 0;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t k = 0; k < sizeof(T); ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > in_.size() - pos_) throw IntegrityError("weight file is truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    auto s = take(sizeof(T));
    T v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(static_cast<T>(s[k]) << (8 * k));
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, std::numeric_limits<uInt>::max());
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t checked_size(std::uint64_t v) {
  if (v == 0 || v > (std::uint64_t{1} << 40)) throw IntegrityError("implausible extent in weight file");
  return static_cast<std::size_t>(v);
}

std::size_t checked_count(std::uint32_t v, std::size_t limit, const char* what) {
  if (v == 0 || v > limit) throw IntegrityError(std::string("implausible ") + what + " in weight file");
  return v;
}

std::vector<std::size_t> read_extents(Reader& r, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (auto& e : v) e = checked_size(r.le<std::uint64_t>());
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const WeightBundle& bundle) {
  Writer head;
  head.bytes(kMagic, 4);
  head.le<std::uint32_t>(kWeightFileVersion);
  head.le<std::uint32_t>(static_cast<std::uint32_t>(bundle.size()));

  Writer payload;
  for (const WeightEntry& e : bundle) {
    head.le<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    head.bytes(e.name.data(), e.name.size());
    if (const auto* t = std::get_if<DenseTensor>(&e.value)) {
      head.u8(kKindDense);
      head.u8(kDtypeF64);
      head.le<std::uint32_t>(static_cast<std::uint32_t>(t->rank()));
      for (auto x : t->shape()) head.le<std::uint64_t>(x);
      for (double v : t->data()) payload.f64(v);
    } else {
      const auto& op = std::get<MpoOperator>(e.value);
      const MpoPlan& p = op.plan();
      head.u8(kKindMpo);
      head.u8(kDtypeF64);
      head.le<std::uint32_t>(static_cast<std::uint32_t>(p.num_cores()));
      for (auto x : p.input_factors) head.le<std::uint64_t>(x);
      for (auto x : p.output_factors) head.le<std::uint64_t>(x);
      for (auto x : p.bond_dims) head.le<std::uint64_t>(x);
      for (const auto& core : op.cores())
        for (double v : core.data()) payload.f64(v);
    }
  }
  const auto& body = payload.buffer();
  head.le<std::uint64_t>(body.size());
  head.bytes(body.data(), body.size());
  head.le<std::uint32_t>(crc32_of(body));
  return std::move(head.buffer());
}

WeightBundle decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw IntegrityError("not a weight file (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kWeightFileVersion) {
    throw IntegrityError("unsupported weight file version " + std::to_string(version));
  }
  const std::uint32_t count = r.le<std::uint32_t>();
  if (count > r.remaining()) throw IntegrityError("entry count exceeds file size");

  struct Pending {
    std::string name;
    std::uint8_t kind;
    Shape shape;
    MpoPlan plan;
  };
  std::vector<Pending> pending;
  std::size_t total_values = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    Pending p;
    const std::uint32_t len = r.le<std::uint32_t>();
    auto name = r.take(len);
    p.name.assign(name.begin(), name.end());
    p.kind = r.le<std::uint8_t>();
    if (r.le<std::uint8_t>() != kDtypeF64) throw IntegrityError("unsupported dtype in entry '" + p.name + "'");
    if (p.kind == kKindDense) {
      p.shape = read_extents(r, checked_count(r.le<std::uint32_t>(), 64, "rank"));
      total_values += shape_product(p.shape);
    } else if (p.kind == kKindMpo) {
      const std::size_t n = checked_count(r.le<std::uint32_t>(), 64, "core count");
      p.plan.input_factors = read_extents(r, n);
      p.plan.output_factors = read_extents(r, n);
      p.plan.bond_dims = read_extents(r, n + 1);
      try {
        p.plan.validate();
      } catch (const ExtentError& e) {
        throw IntegrityError("invalid MPO plan in entry '" + p.name + "': " + e.what());
      }
      total_values += parameter_count(p.plan);
    } else {
      throw IntegrityError("unknown entry kind in '" + p.name + "'");
    }
    pending.push_back(std::move(p));
  }

  const auto payload_bytes = r.le<std::uint64_t>();
  if (payload_bytes != total_values * sizeof(double)) throw IntegrityError("payload size disagrees with entry table");
  auto payload = r.take(static_cast<std::size_t>(payload_bytes));
  const std::uint32_t crc = r.le<std::uint32_t>();
  if (r.remaining() != 0) throw IntegrityError("trailing bytes after checksum");
  if (crc != crc32_of(payload)) throw IntegrityError("payload checksum mismatch");

  Reader values(payload);
  auto read_values = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = std::bit_cast<double>(values.le<std::uint64_t>());
    return v;
  };
  WeightBundle out;
  for (Pending& p : pending) {
    if (p.kind == kKindDense) {
      const std::size_t n = shape_product(p.shape);
      out.push_back({p.name, DenseTensor(p.shape, read_values(n))});
    } else {
      std::vector<DenseTensor> cores;
      for (std::size_t k = 0; k < p.plan.num_cores(); ++k) {
        Shape s{p.plan.bond_dims[k], p.plan.output_factors[k], p.plan.input_factors[k], p.plan.bond_dims[k + 1]};
        const std::size_t n = shape_product(s);
        cores.emplace_back(std::move(s), read_values(n));
      }
      out.push_back({p.name, MpoOperator(p.plan, std::move(cores))});
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void save_weights(const std::filesystem::path& path, const WeightBundle& bundle) {
  write_file_atomic(path, encode_weights(bundle));
}

WeightBundle load_weights(const std::filesystem::path& path) { return decode_weights(read_file(path)); }

}  // namespace mpolstm
