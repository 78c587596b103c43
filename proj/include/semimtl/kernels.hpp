#pragma once

#include <cstdint>

namespace semimtl::kernels {

/// Geometry of one conv2d call. hout/wout are derived by conv_dims().
struct ConvDims {
    int n = 0;
    int cin = 0;
    int hin = 0;
    int win = 0;
    int cout = 0;
    int kh = 0;
    int kw = 0;
    int stride = 1;
    int pad = 0;
    int hout = 0;
    int wout = 0;
};

/// Validates and completes the conv geometry. Throws std::invalid_argument on
/// an impossible configuration (kernel larger than padded input, stride < 1).
ConvDims conv_dims(int n, int cin, int hin, int win, int cout, int kh, int kw, int stride, int pad);

/// Whether the dispatching wrappers below use the OpenMP kernels on this
/// thread. Both paths produce bitwise-identical results; the flag exists so
/// that callers running many independent jobs can opt out of nested
/// parallelism. Defaults to true.
bool parallel_enabled();
void set_parallel_enabled(bool flag);

// Serial reference kernels. Kept as the ground truth the OpenMP versions are
// tested against; per output element the summation order is identical.
namespace serial {
void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_weight(const double* dy, const double* x, double* dw, const ConvDims& d);
void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d);
void upsample_bilinear_forward(const double* x, double* y, int n, int c, int hin, int win, int hout, int wout);
void upsample_bilinear_backward(const double* dy, double* dx, int n, int c, int hin, int win, int hout, int wout);
}  // namespace serial

// OpenMP kernels, parallel over independent output slabs.
namespace par {
void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_weight(const double* dy, const double* x, double* dw, const ConvDims& d);
void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d);
void upsample_bilinear_forward(const double* x, double* y, int n, int c, int hin, int win, int hout, int wout);
void upsample_bilinear_backward(const double* dy, double* dx, int n, int c, int hin, int win, int hout, int wout);
}  // namespace par

// Dispatching wrappers; pick par or serial based on parallel_enabled().
void conv2d_forward(const double* x, const double* w, const double* bias, double* y, const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_weight(const double* dy, const double* x, double* dw, const ConvDims& d);
void conv2d_backward_bias(const double* dy, double* db, const ConvDims& d);
void upsample_bilinear_forward(const double* x, double* y, int n, int c, int hin, int win, int hout, int wout);
void upsample_bilinear_backward(const double* dy, double* dx, int n, int c, int hin, int win, int hout, int wout);

}  // namespace semimtl::kernels
