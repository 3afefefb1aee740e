#ifndef SLATPHYS_KERNELS_HPP_
#define SLATPHYS_KERNELS_HPP_

#include <cstddef>
#include <span>
#include <vector>

// Dense building blocks of the decoder. Every kernel exists twice: a plain
// serial reference and an OpenMP version. Both accumulate each output element
// in the same order, so their results are bit-identical for any thread count.
//
// Layouts: activations are row-major [rows x dim]; linear weights are
// input-major [in x out] so the innermost loop runs over contiguous outputs.

namespace slatphys::kernels {

// Voxel indices grouped by attention window; indices ascending within a group.
using Groups = std::vector<std::vector<std::size_t>>;

struct AttentionShape {
  std::size_t rows = 0;
  std::size_t channels = 0;
  std::size_t heads = 1;
  double scale = 1.0;
};

inline constexpr double kLayerNormEps = 1e-5;

namespace serial {
void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out);
// dx is overwritten (skipped when empty); dw and db are accumulated into.
void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db, std::size_t rows, std::size_t in, std::size_t out);
void layernorm_forward(std::span<const double> x, std::span<const double> gamma,
                       std::span<const double> beta, std::span<double> y,
                       std::span<double> mean, std::span<double> rstd, std::size_t rows,
                       std::size_t dim);
// dx is overwritten; dgamma and dbeta are accumulated into.
void layernorm_backward(std::span<const double> x, std::span<const double> gamma,
                        std::span<const double> mean, std::span<const double> rstd,
                        std::span<const double> dy, std::span<double> dx,
                        std::span<double> dgamma, std::span<double> dbeta, std::size_t rows,
                        std::size_t dim);
void gelu_forward(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);
void window_attention_forward(std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, const Groups& groups,
                              const AttentionShape& shape, std::span<double> out);
// dq, dk, dv are overwritten.
void window_attention_backward(std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> dout,
                               const Groups& groups, const AttentionShape& shape,
                               std::span<double> dq, std::span<double> dk, std::span<double> dv);
}  // namespace serial

namespace parallel {
void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out);
// dx is overwritten (skipped when empty); dw and db are accumulated into.
void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db, std::size_t rows, std::size_t in, std::size_t out);
void layernorm_forward(std::span<const double> x, std::span<const double> gamma,
                       std::span<const double> beta, std::span<double> y,
                       std::span<double> mean, std::span<double> rstd, std::size_t rows,
                       std::size_t dim);
// dx is overwritten; dgamma and dbeta are accumulated into.
void layernorm_backward(std::span<const double> x, std::span<const double> gamma,
                        std::span<const double> mean, std::span<const double> rstd,
                        std::span<const double> dy, std::span<double> dx,
                        std::span<double> dgamma, std::span<double> dbeta, std::size_t rows,
                        std::size_t dim);
void gelu_forward(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);
void window_attention_forward(std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, const Groups& groups,
                              const AttentionShape& shape, std::span<double> out);
// dq, dk, dv are overwritten.
void window_attention_backward(std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> dout,
                               const Groups& groups, const AttentionShape& shape,
                               std::span<double> dq, std::span<double> dk, std::span<double> dv);
}  // namespace parallel

double gelu(double x);
double gelu_grad(double x);

enum class Exec { kSerial, kParallel };

// Function table so callers can switch implementations at run time.
struct KernelSet {
  decltype(&serial::linear_forward) linear_forward;
  decltype(&serial::linear_backward) linear_backward;
  decltype(&serial::layernorm_forward) layernorm_forward;
  decltype(&serial::layernorm_backward) layernorm_backward;
  decltype(&serial::gelu_forward) gelu_forward;
  decltype(&serial::gelu_backward) gelu_backward;
  decltype(&serial::window_attention_forward) window_attention_forward;
  decltype(&serial::window_attention_backward) window_attention_backward;
};

const KernelSet& kernel_set(Exec exec);

}  // namespace slatphys::kernels

#endif  // SLATPHYS_KERNELS_HPP_
