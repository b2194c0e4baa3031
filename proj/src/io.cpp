#include "qgle/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "qgle/error.hpp"

namespace qgle {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

void header(std::ostream& out, const char* prefix, int count, bool& first) {
  for (int i = 1; i <= count; ++i) {
    if (!first) out << ',';
    out << prefix << i;
    first = false;
  }
}

double parse_field(const std::string& field, std::size_t line) {
  double v = 0.0;
  const char* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError("not a number: '" + field + "'", line, 1);
  return v;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << 't';
  bool first = false;
  header(out, "q_", traj.n(), first);
  header(out, "p_", traj.n(), first);
  header(out, "s_", traj.m(), first);
  out << "\r\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << format_double(traj.t(i));
    for (int k = 0; k < traj.width(); ++k) out << ',' << format_double(traj.value(i, k));
    out << "\r\n";
  }
}

Trajectory read_trajectory_csv(std::istream& in, int n, int m) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kIo, "empty trajectory file");
  Trajectory traj(n, m);
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(parse_field(field, number));
    if (row.size() != static_cast<std::size_t>(1 + 2 * n + m))
      throw ParseError("wrong column count", number, 1);
    ExtendedState x;
    x.t = row[0];
    x.q = Eigen::Map<VectorXd>(row.data() + 1, n);
    x.p = Eigen::Map<VectorXd>(row.data() + 1 + n, n);
    x.s = Eigen::Map<VectorXd>(row.data() + 1 + 2 * n, m);
    traj.push(x);
  }
  return traj;
}

void write_noise_sidecar(std::ostream& out, const std::vector<double>& noise) {
  out.write("QGLN", 4);
  out.put(static_cast<char>(kNoiseFormatVersion));
  for (double v : noise) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> bytes{};
    for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(bytes.data(), 8);
  }
}

std::vector<double> read_noise_sidecar(std::istream& in, int dim) {
  std::array<char, 5> head{};
  if (!in.read(head.data(), 5) || std::memcmp(head.data(), "QGLN", 4) != 0)
    throw Error(ErrorKind::kIo, "noise sidecar: bad magic");
  if (static_cast<std::uint8_t>(head[4]) != kNoiseFormatVersion)
    throw Error(ErrorKind::kIo, "noise sidecar: unsupported version " +
                                    std::to_string(static_cast<std::uint8_t>(head[4])));
  std::vector<double> out;
  std::array<char, 8> bytes{};
  while (in.read(bytes.data(), 8)) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(b)])) << (8 * b);
    out.push_back(std::bit_cast<double>(bits));
  }
  if (in.gcount() != 0) throw Error(ErrorKind::kIo, "noise sidecar: truncated value");
  if (dim < 1 || out.size() % static_cast<std::size_t>(dim) != 0)
    throw Error(ErrorKind::kIo, "noise sidecar: length is not a multiple of n+m");
  return out;
}

void write_kernel_csv(std::ostream& out, const MemoryKernel& kernel,
                      const std::vector<double>& taus) {
  const int n = kernel.n();
  out << "tau";
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) out << ",K_" << i << '_' << j;
  out << "\r\n";
  for (double tau : taus) {
    const MatrixXd k = kernel_eval(kernel, tau);
    out << format_double(tau);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out << ',' << format_double(k(i, j));
    out << "\r\n";
  }
}

void write_eigs_csv(std::ostream& out, const std::vector<EigenRow>& table) {
  if (table.empty()) return;
  bool first = true;
  header(out, "q_", static_cast<int>(table.front().q.size()), first);
  header(out, "lambda_", static_cast<int>(table.front().eigenvalues.size()), first);
  out << "\r\n";
  for (const EigenRow& row : table) {
    bool sep = false;
    for (double v : row.q) {
      out << (sep ? "," : "") << format_double(v);
      sep = true;
    }
    for (double v : row.eigenvalues) out << ',' << format_double(v);
    out << "\r\n";
  }
}

}  // namespace qgle
