#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "renoise/budget.hpp"
#include "renoise/diagnostics.hpp"
#include "renoise/sampler.hpp"
#include "renoise/schedule.hpp"

namespace renoise {

// ---------------------------------------------------------------------------
// Trajectory binary format, all integers unsigned 32-bit little-endian:
//   "RNZT" | version | rank | dims[rank] | T | latents z_0..z_T | noises eps_1..eps_T
// Reals are little-endian IEEE-754 binary64. Absent noises (deterministic
// steps) are written as zeros and read back as zero-valued noise.

inline constexpr std::array<char, 4> kTrajectoryMagic{'R', 'N', 'Z', 'T'};
inline constexpr std::uint32_t kTrajectoryVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

inline void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("trajectory file truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw Error("trajectory file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_trajectory(std::ostream& os, const Trajectory& traj) {
  if (traj.latents.empty()) throw Error("write_trajectory: no latents");
  const std::size_t T = traj.latents.size() - 1;
  if (traj.noises.size() != T) throw Error("write_trajectory: expected one noise slot per step");
  const Shape& shape = traj.latents.front().shape();
  os.write(kTrajectoryMagic.data(), 4);
  detail::put_u32(os, kTrajectoryVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
  detail::put_u32(os, static_cast<std::uint32_t>(T));
  for (const Latent& z : traj.latents) {
    if (z.shape() != shape) throw Error("write_trajectory: latents differ in shape");
    for (double v : z.data()) detail::put_f64(os, v);
  }
  const std::size_t n = shape_volume(shape);
  for (const auto& eps : traj.noises) {
    if (eps && eps->shape() != shape) throw Error("write_trajectory: noise differs in shape");
    for (std::size_t i = 0; i < n; ++i) detail::put_f64(os, eps ? (*eps)[i] : 0.0);
  }
  if (!os) throw Error("write_trajectory: stream error");
}

inline Trajectory read_trajectory(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kTrajectoryMagic) throw Error("not an RNZT trajectory file");
  const std::uint32_t version = detail::get_u32(is);
  if (version != kTrajectoryVersion) throw Error("unsupported RNZT version " + std::to_string(version));
  const std::uint32_t rank = detail::get_u32(is);
  if (rank == 0 || rank > 16) throw Error("RNZT: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = detail::get_u32(is);
  const std::size_t n = shape_volume(shape);
  const std::uint32_t T = detail::get_u32(is);
  Trajectory traj;
  auto read_latent = [&] {
    std::vector<double> data(n);
    for (double& v : data) v = detail::get_f64(is);
    return Latent(shape, std::move(data));
  };
  for (std::uint32_t i = 0; i <= T; ++i) traj.latents.push_back(read_latent());
  for (std::uint32_t i = 0; i < T; ++i) traj.noises.emplace_back(read_latent());
  return traj;
}

// ---------------------------------------------------------------------------
// CSV emission. Reals use 17 significant digits; +inf prints as "inf".

inline std::string csv_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return detail::format_real(v);
}

/// Header: t,k,delta_norm,scaled_jac_norm,ratio. One row per (t, k), k = 1..K;
/// ratio is delta_norm(k) / delta_norm(k-1) and blank for k = 1, as is
/// scaled_jac_norm when it was not measured.
inline void write_convergence_csv(std::ostream& os, const ConvergenceReport& rep) {
  os << "t,k,delta_norm,scaled_jac_norm,ratio\n";
  for (const auto& s : rep.steps) {
    for (std::size_t k = 0; k < s.delta_norms.size(); ++k) {
      os << csv_real(s.t) << ',' << (k + 1) << ',' << csv_real(s.delta_norms[k]) << ',';
      if (k < s.scaled_jacobian.size()) os << csv_real(s.scaled_jacobian[k]);
      os << ',';
      if (k > 0 && s.delta_norms[k - 1] > 0.0) os << csv_real(s.delta_norms[k] / s.delta_norms[k - 1]);
      os << '\n';
    }
  }
}

inline void write_metrics_csv(std::ostream& os, const ReconstructionMetrics& m, std::size_t op_count) {
  os << "l2,psnr,peak,op_count\n"
     << csv_real(m.l2) << ',' << csv_real(m.psnr) << ',' << csv_real(m.peak) << ',' << op_count << '\n';
}

inline void write_budget_csv(std::ostream& os, const std::vector<BudgetResult>& rows) {
  os << "inversion_steps,denoise_steps,k,inversion_ops,op_count,l2,psnr\n";
  for (const auto& r : rows)
    os << r.row.inversion_steps << ',' << r.row.denoise_steps << ',' << r.row.K << ',' << r.inversion_ops << ','
       << r.op_count << ',' << csv_real(r.metrics.l2) << ',' << csv_real(r.metrics.psnr) << '\n';
}

}  // namespace renoise
