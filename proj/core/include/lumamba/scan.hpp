#pragma once

#include <cstdint>

#include "lumamba/array.hpp"
#include "lumamba/tape.hpp"

namespace lumamba {

enum class ScanKernel { sequential, associative };

// Multiplications counted by the forward kernels as they run.
struct ScanStats {
  std::uint64_t macs = 0;
};

// Raw selective scan over u, delta (B,L,D); a (D,N) transition rates (negative);
// b, c (B,L,N); skip (D):
//   h_t = exp(delta_t * a) * h_{t-1} + delta_t * b_t * u_t,  y_t = c_t . h_t + skip * u_t.
// Returns y (B,L,D). If `states` is non-null it receives h for every step (B,L,D,N).
// Throws std::runtime_error naming the step on a non-finite value.
Array scan_forward(const Array& u, const Array& delta, const Array& a, const Array& b, const Array& c,
                   const Array& skip, ScanKernel kernel = ScanKernel::sequential, Array* states = nullptr,
                   ScanStats* stats = nullptr);

// Multiplications the sequential kernel performs per (batch, step, channel).
inline std::uint64_t scan_macs_per_channel(std::size_t state) { return 5 * state + 1; }

// Differentiable selective scan; the backward pass is a reverse-time recurrence
// over the stored states.
Var selective_scan(Var u, Var delta, Var a, Var b, Var c, Var skip, ScanKernel kernel = ScanKernel::sequential,
                   ScanStats* stats = nullptr);

}  // namespace lumamba
