/* C boundary for an external selective-scan kernel.
 *
 * A kernel library exports `xrf_scan_recurrent_f32` and `xrf_scan_abi_version`.
 * The primary library discovers it at runtime (see native_scan.hpp) and falls
 * back to its reference scan when the library or symbol is absent.
 *
 * Buffers are contiguous row-major float32:
 *   x [B,L,E], a_bar [B,L,E,N], b_bar [B,L,E,N], c [B,L,N], y [B,L,E] (out).
 */
#ifndef XRFMAMBA_SSM_SCAN_ABI_H_
#define XRFMAMBA_SSM_SCAN_ABI_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define XRF_SCAN_ABI_VERSION 1

typedef struct XrfScanDims {
  uint64_t batch;
  uint64_t length;
  uint64_t inner;
  uint64_t state;
} XrfScanDims;

enum XrfScanStatus {
  XRF_SCAN_OK = 0,
  XRF_SCAN_DIM_MISMATCH = 1,
  XRF_SCAN_NULL_BUFFER = 2,
  XRF_SCAN_INTERNAL = 3
};

typedef int32_t (*xrf_scan_recurrent_f32_fn)(const XrfScanDims* dims, const float* x,
                                             const float* a_bar, const float* b_bar,
                                             const float* c, float* y);
typedef uint32_t (*xrf_scan_abi_version_fn)(void);

#ifdef __cplusplus
}
#endif

#endif /* XRFMAMBA_SSM_SCAN_ABI_H_ */
