#pragma once

#include <complex>
#include <string>
#include <vector>

#include "spinshuffle/core.hpp"

namespace spinshuffle {

// "<base>.hdr" holds ndim, the dims (first fastest) and "complex64";
// "<base>.dat" holds little-endian interleaved float32 pairs.
struct ComplexArray {
  std::vector<Index> dims;
  std::vector<std::complex<float>> data;

  Index numel() const;
};

void write_array(std::string const &base, ComplexArray const &array);
ComplexArray read_array(std::string const &base);

// Values are stored at single precision.
void write_array(std::string const &base, std::vector<Index> const &dims, CMat const &values);
void write_array(std::string const &base, std::vector<Index> const &dims, RMat const &values);
CMat to_matrix(ComplexArray const &array, Index rows, Index cols);

} // namespace spinshuffle
