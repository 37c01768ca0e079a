#include "spinshuffle/array_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spinshuffle {

namespace {

std::uint32_t to_little(std::uint32_t v)
{
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
  }
  return v;
}

} // namespace

Index ComplexArray::numel() const
{
  Index n = 1;
  for (Index d : dims) {
    n *= d;
  }
  return n;
}

void write_array(std::string const &base, ComplexArray const &array)
{
  if (array.dims.empty()) {
    throw std::invalid_argument("array needs at least one dimension");
  }
  for (Index d : array.dims) {
    if (d < 1) {
      throw std::invalid_argument("array dimensions must be positive");
    }
  }
  if (array.numel() != static_cast<Index>(array.data.size())) {
    throw std::invalid_argument("array dims do not match the number of values");
  }
  {
    std::ofstream hdr(base + ".hdr", std::ios::binary);
    if (!hdr) {
      throw std::runtime_error("cannot open " + base + ".hdr for writing");
    }
    hdr << array.dims.size() << "\n";
    for (size_t i = 0; i < array.dims.size(); i++) {
      hdr << (i ? " " : "") << array.dims[i];
    }
    hdr << "\ncomplex64\n";
  }
  std::vector<std::uint32_t> words(2 * array.data.size());
  for (size_t i = 0; i < array.data.size(); i++) {
    float const re = array.data[i].real();
    float const im = array.data[i].imag();
    std::uint32_t a;
    std::uint32_t b;
    std::memcpy(&a, &re, 4);
    std::memcpy(&b, &im, 4);
    words[2 * i] = to_little(a);
    words[2 * i + 1] = to_little(b);
  }
  std::ofstream dat(base + ".dat", std::ios::binary);
  if (!dat) {
    throw std::runtime_error("cannot open " + base + ".dat for writing");
  }
  dat.write(reinterpret_cast<char const *>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!dat) {
    throw std::runtime_error("failed writing " + base + ".dat");
  }
}

ComplexArray read_array(std::string const &base)
{
  std::ifstream hdr(base + ".hdr");
  if (!hdr) {
    throw std::runtime_error("cannot open " + base + ".hdr");
  }
  std::string line;
  long long ndim = 0;
  if (!std::getline(hdr, line) || !(std::istringstream(line) >> ndim) || ndim < 1) {
    throw std::runtime_error(base + ".hdr: malformed dimension count");
  }
  ComplexArray out;
  if (!std::getline(hdr, line)) {
    throw std::runtime_error(base + ".hdr: missing dims line");
  }
  std::istringstream dims(line);
  long long d;
  while (dims >> d) {
    if (d < 1) {
      throw std::runtime_error(base + ".hdr: nonpositive dimension");
    }
    out.dims.push_back(static_cast<Index>(d));
  }
  if (!dims.eof() || static_cast<long long>(out.dims.size()) != ndim) {
    throw std::runtime_error(base + ".hdr: dims line does not list " + std::to_string(ndim) +
                             " integers");
  }
  std::string token;
  if (!std::getline(hdr, line) || !(std::istringstream(line) >> token) || token != "complex64") {
    throw std::runtime_error(base + ".hdr: element type must be complex64");
  }

  std::ifstream dat(base + ".dat", std::ios::binary | std::ios::ate);
  if (!dat) {
    throw std::runtime_error("cannot open " + base + ".dat");
  }
  auto const bytes = static_cast<Index>(dat.tellg());
  Index const n = out.numel();
  if (bytes != n * 8) {
    throw std::runtime_error(base + ": header describes " + std::to_string(n) + " values but payload has " +
                             std::to_string(bytes) + " bytes");
  }
  dat.seekg(0);
  std::vector<std::uint32_t> words(static_cast<size_t>(2 * n));
  dat.read(reinterpret_cast<char *>(words.data()), static_cast<std::streamsize>(bytes));
  out.data.resize(static_cast<size_t>(n));
  for (size_t i = 0; i < out.data.size(); i++) {
    std::uint32_t const a = to_little(words[2 * i]);
    std::uint32_t const b = to_little(words[2 * i + 1]);
    float re;
    float im;
    std::memcpy(&re, &a, 4);
    std::memcpy(&im, &b, 4);
    out.data[i] = {re, im};
  }
  return out;
}

void write_array(std::string const &base, std::vector<Index> const &dims, CMat const &values)
{
  ComplexArray a;
  a.dims = dims;
  a.data.resize(static_cast<size_t>(values.size()));
  for (Index i = 0; i < values.size(); i++) {
    cplx const v = values.data()[i];
    a.data[static_cast<size_t>(i)] = {static_cast<float>(v.real()), static_cast<float>(v.imag())};
  }
  write_array(base, a);
}

void write_array(std::string const &base, std::vector<Index> const &dims, RMat const &values)
{
  write_array(base, dims, CMat(values.cast<cplx>()));
}

CMat to_matrix(ComplexArray const &array, Index rows, Index cols)
{
  if (rows * cols != array.numel()) {
    throw std::invalid_argument("array does not have the requested number of values");
  }
  CMat m(rows, cols);
  for (Index i = 0; i < m.size(); i++) {
    auto const v = array.data[static_cast<size_t>(i)];
    m.data()[i] = cplx(v.real(), v.imag());
  }
  return m;
}

} // namespace spinshuffle
