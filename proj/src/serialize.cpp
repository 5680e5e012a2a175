#include "vad/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace vad {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'E', 'N'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::size_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) {
    throw FormatError("tensor container: write failed");
  }
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError("tensor container: truncated input");
  }
}

template <typename S>
constexpr std::uint8_t dtype_of() {
  if constexpr (std::is_same_v<S, float>) {
    return kDtypeF32;
  } else {
    return kDtypeF64;
  }
}

}  // namespace

void write_u32_le(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }

std::uint32_t read_u32_le(std::istream& is) {
  std::uint32_t v = 0;
  read_bytes(is, &v, 4);
  return v;
}

template <typename S>
void write_tensor(std::ostream& os, const Tensor<S>& t) {
  const Shape& shape = t.shape();
  if (shape.size() > kMaxRank) {
    throw FormatError("tensor container: rank " + std::to_string(shape.size()) +
                      " exceeds limit");
  }
  write_bytes(os, kMagic, 4);
  const std::uint8_t rank = static_cast<std::uint8_t>(shape.size());
  write_bytes(os, &rank, 1);
  for (std::size_t d : shape) {
    write_u32_le(os, static_cast<std::uint32_t>(d));
  }
  const std::uint8_t dtype = dtype_of<S>();
  write_bytes(os, &dtype, 1);
  const auto data = t.data();
  write_bytes(os, data.data(), data.size() * sizeof(S));
}

template <typename S>
Tensor<S> read_tensor(std::istream& is) {
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("tensor container: bad magic");
  }
  std::uint8_t rank = 0;
  read_bytes(is, &rank, 1);
  if (rank > kMaxRank) {
    throw FormatError("tensor container: rank " + std::to_string(rank) + " exceeds limit");
  }
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = read_u32_le(is);
  }
  std::uint8_t dtype = 0;
  read_bytes(is, &dtype, 1);
  const std::size_t n = shape_numel(shape);
  std::vector<S> values(n);
  if (dtype == dtype_of<S>()) {
    read_bytes(is, values.data(), n * sizeof(S));
  } else if (dtype == kDtypeF32) {
    std::vector<float> raw(n);
    read_bytes(is, raw.data(), n * sizeof(float));
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<S>(raw[i]);
  } else if (dtype == kDtypeF64) {
    std::vector<double> raw(n);
    read_bytes(is, raw.data(), n * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<S>(raw[i]);
  } else {
    throw FormatError("tensor container: unknown dtype " + std::to_string(dtype));
  }
  return Tensor<S>::from_data(std::move(shape), std::move(values));
}

template <typename S>
void save_tensor(const std::string& path, const Tensor<S>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open " + path + " for writing");
  }
  write_tensor(os, t);
}

template <typename S>
Tensor<S> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open " + path);
  }
  return read_tensor<S>(is);
}

template <typename S>
void write_named_tensor(std::ostream& os, const std::string& name, const Tensor<S>& t) {
  write_u32_le(os, static_cast<std::uint32_t>(name.size()));
  write_bytes(os, name.data(), name.size());
  write_tensor(os, t);
}

template <typename S>
std::pair<std::string, Tensor<S>> read_named_tensor(std::istream& is) {
  const std::uint32_t len = read_u32_le(is);
  if (len > 4096) {
    throw FormatError("tensor record: name length " + std::to_string(len) +
                      " is implausible");
  }
  std::string name(len, '\0');
  read_bytes(is, name.data(), len);
  return {std::move(name), read_tensor<S>(is)};
}

#define VAD_INSTANTIATE_SERIALIZE(S)                                              \
  template void write_tensor(std::ostream&, const Tensor<S>&);                    \
  template Tensor<S> read_tensor(std::istream&);                                  \
  template void save_tensor(const std::string&, const Tensor<S>&);                \
  template Tensor<S> load_tensor(const std::string&);                             \
  template void write_named_tensor(std::ostream&, const std::string&,             \
                                   const Tensor<S>&);                             \
  template std::pair<std::string, Tensor<S>> read_named_tensor(std::istream&);

VAD_INSTANTIATE_SERIALIZE(float)
VAD_INSTANTIATE_SERIALIZE(double)

#undef VAD_INSTANTIATE_SERIALIZE

}  // namespace vad
