#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "comanip/error.hpp"
#include "comanip/tensor.hpp"

namespace comanip::wav {

// Scaling (low-pass) filter for the stationary transform. Taps are normalized
// to sum to 1 so constant signals pass through unchanged.
struct WaveletFilter {
  std::string name;
  std::vector<double> taps;

  static WaveletFilter haar() { return {"haar", {0.5, 0.5}}; }

  static WaveletFilter db4() {
    // Daubechies-4 scaling coefficients over sqrt(2).
    std::vector<double> t = {0.23037781330885523, 0.71484657055254153, 0.63088076792959036,
                             -0.02798376941698385, -0.18703481171888114, 0.03084138183598697,
                             0.03288301166698295, -0.01059740178499728};
    double s = 0.0;
    for (double v : t) s += v;
    for (double& v : t) v /= s;
    return {"db4", std::move(t)};
  }

  static WaveletFilter by_name(const std::string& n) {
    if (n == "haar") return haar();
    if (n == "db4") return db4();
    throw ValueError("unknown wavelet filter '" + n + "' (expected haar or db4)");
  }
};

// A sequence padded on the future side to a power-of-two length, remembering
// how long it really is.
struct PaddedSequence {
  Tensor data;       // (P, D), P a power of two
  int original_len;  // T <= P
};

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Zero-pads (T, D) rows up to the next power of two. Rank-1 input is treated
// as a single column.
inline PaddedSequence pad_pow2(const Tensor& x) {
  if (x.numel() == 0) throw ValueError("pad_pow2: empty sequence");
  const int t = x.rank() == 1 ? x.shape[0] : x.rows();
  const int d = x.rank() == 1 ? 1 : x.cols();
  const int p = next_pow2(t);
  Tensor out({p, d});
  std::copy(x.data.begin(), x.data.end(), out.data.begin());
  return {std::move(out), t};
}

// Undecimated (a-trous) approximation pyramid. Level l is built from level
// l-1 with the filter taps spaced 2^(l-1) apart, circular indexing on the
// padded length; outputs are trimmed back to the original length.
inline std::vector<Tensor> swt_approx(const PaddedSequence& seq, int levels,
                                      const WaveletFilter& filter = WaveletFilter::haar()) {
  const int p = seq.data.rows();
  const int d = seq.data.cols();
  if (levels < 1) throw ValueError("swt_approx: levels must be >= 1");
  if ((1 << levels) > p)
    throw ValueError("swt_approx: 2^" + std::to_string(levels) + " exceeds padded length " +
                     std::to_string(p));
  const int ntaps = static_cast<int>(filter.taps.size());
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(levels));
  Tensor prev = seq.data;
  Tensor cur({p, d});
  for (int l = 1; l <= levels; ++l) {
    const int gap = 1 << (l - 1);
    for (int n = 0; n < p; ++n) {
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int k = 0; k < ntaps; ++k) {
          int idx = n - k * gap;
          idx %= p;
          if (idx < 0) idx += p;
          acc += filter.taps[static_cast<size_t>(k)] * prev(idx, c);
        }
        cur(n, c) = acc;
      }
    }
    Tensor trimmed({seq.original_len, d});
    std::copy(cur.data.begin(),
              cur.data.begin() + static_cast<long>(seq.original_len) * d, trimmed.data.begin());
    out.push_back(std::move(trimmed));
    std::swap(prev, cur);
  }
  return out;
}

// Reshapes L level matrices (T, D) with T = H*S into one (H, S, L, D) block
// tensor: blocks[h, s, l, d] == levels[l][h*S + s, d].
inline Tensor stack_blocks(const std::vector<Tensor>& levels, int H, int S) {
  if (levels.empty()) throw ValueError("stack_blocks: no levels");
  const int L = static_cast<int>(levels.size());
  const int t = levels[0].rows();
  const int d = levels[0].cols();
  if (t != H * S)
    throw ShapeError("stack_blocks: T=" + std::to_string(t) + " is not H*S=" +
                     std::to_string(H) + "*" + std::to_string(S));
  for (const auto& lv : levels)
    if (lv.rows() != t || lv.cols() != d)
      throw ShapeError("stack_blocks: level shapes disagree");
  Tensor out({H, S, L, d});
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int l = 0; l < L; ++l)
        for (int c = 0; c < d; ++c)
          out.data[static_cast<size_t>(((h * S + s) * L + l)) * d + c] = levels[static_cast<size_t>(l)](h * S + s, c);
  return out;
}

// (S, D) view of one (h, l) block of a stacked tensor.
inline Tensor block_of(const Tensor& stack, int h, int l) {
  const int H = stack.shape[0], S = stack.shape[1], L = stack.shape[2], D = stack.shape[3];
  if (h < 0 || h >= H || l < 0 || l >= L) throw ValueError("block_of: index out of range");
  Tensor out({S, D});
  for (int s = 0; s < S; ++s)
    for (int d = 0; d < D; ++d)
      out(s, d) = stack.data[static_cast<size_t>(((h * S + s) * L + l)) * D + d];
  return out;
}

// pad -> swt -> stack in one call, for (H*S, D) windows.
inline Tensor wavelet_stack(const Tensor& window, int levels, int H, int S,
                            const WaveletFilter& filter = WaveletFilter::haar()) {
  return stack_blocks(swt_approx(pad_pow2(window), levels, filter), H, S);
}

}  // namespace comanip::wav
