#pragma once

// File formats: RFC-4180 style CSV with '.' decimals, and the framed binary
// noise sidecar ("QGLN", version byte, little-endian doubles).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qgle/ergodicity.hpp"
#include "qgle/kernels.hpp"
#include "qgle/simulate.hpp"

namespace qgle {

/// Shortest decimal that round-trips, independent of the locale.
std::string format_double(double v);

/// Columns t, q_1..q_n, p_1..p_n, s_1..s_m.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);
Trajectory read_trajectory_csv(std::istream& in, int n, int m);

inline constexpr std::uint8_t kNoiseFormatVersion = 1;

void write_noise_sidecar(std::ostream& out, const std::vector<double>& noise);
/// Throws kIo on a bad magic, version or length (must be a multiple of dim).
std::vector<double> read_noise_sidecar(std::istream& in, int dim);

/// Columns tau, K_1_1, K_1_2, ... (row-major entries of K(tau)).
void write_kernel_csv(std::ostream& out, const MemoryKernel& kernel,
                      const std::vector<double>& taus);

/// Columns q_1..q_n, lambda_1..lambda_k (ascending eigenvalues).
void write_eigs_csv(std::ostream& out, const std::vector<EigenRow>& table);

}  // namespace qgle
