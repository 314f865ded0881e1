#pragma once

// Runtime discovery of an external scan kernel behind the C ABI in
// scan_abi.h. Lookup order: the XRF_SCAN_KERNEL environment variable (a path),
// then `libxrf_scan_kernel.so` on the loader search path.

#include <dlfcn.h>

#include <cstdlib>
#include <memory>
#include <mutex>
#include <span>
#include <string>

#include "xrfmamba/errors.hpp"
#include "xrfmamba/ssm/scan_abi.h"
#include "xrfmamba/ssm/ssm.hpp"

namespace xrf::ssm {

class NativeScanKernel {
 public:
  /// Opens `path`; returns nullptr if the library or its symbols are missing
  /// or the ABI version differs.
  static std::unique_ptr<NativeScanKernel> open(const std::string& path) {
    void* handle = ::dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!handle) return nullptr;
    auto version = reinterpret_cast<xrf_scan_abi_version_fn>(
        ::dlsym(handle, "xrf_scan_abi_version"));
    auto scan = reinterpret_cast<xrf_scan_recurrent_f32_fn>(
        ::dlsym(handle, "xrf_scan_recurrent_f32"));
    if (!version || !scan || version() != XRF_SCAN_ABI_VERSION) {
      ::dlclose(handle);
      return nullptr;
    }
    return std::unique_ptr<NativeScanKernel>(new NativeScanKernel(handle, scan, path));
  }

  /// Process-wide kernel resolved once from the environment; nullptr when
  /// none is available.
  static NativeScanKernel* discovered() {
    static std::once_flag once;
    static std::unique_ptr<NativeScanKernel> kernel;
    std::call_once(once, [] {
      if (const char* env = std::getenv("XRF_SCAN_KERNEL"); env && *env) {
        kernel = open(env);
      } else {
        kernel = open("libxrf_scan_kernel.so");
      }
    });
    return kernel.get();
  }

  ~NativeScanKernel() {
    if (handle_) ::dlclose(handle_);
  }
  NativeScanKernel(const NativeScanKernel&) = delete;
  NativeScanKernel& operator=(const NativeScanKernel&) = delete;

  const std::string& path() const { return path_; }

  /// Returns the kernel's status code; y is untouched unless it returns OK.
  int32_t run(const ScanDims& d, std::span<const float> x, std::span<const float> a_bar,
              std::span<const float> b_bar, std::span<const float> c, std::span<float> y) const {
    const XrfScanDims dims{d.batch, d.length, d.inner, d.state};
    const std::size_t ble = d.batch * d.length * d.inner;
    if (x.size() != ble || y.size() != ble || a_bar.size() != ble * d.state ||
        b_bar.size() != ble * d.state || c.size() != d.batch * d.length * d.state) {
      return XRF_SCAN_DIM_MISMATCH;
    }
    return scan_(&dims, x.data(), a_bar.data(), b_bar.data(), c.data(), y.data());
  }

 private:
  NativeScanKernel(void* handle, xrf_scan_recurrent_f32_fn scan, std::string path)
      : handle_(handle), scan_(scan), path_(std::move(path)) {}

  void* handle_;
  xrf_scan_recurrent_f32_fn scan_;
  std::string path_;
};

/// Selective scan through `kernel` when given, otherwise the reference loop.
/// A kernel error surfaces as an exception rather than a silent fallback.
inline void scan_recurrent_dispatch(const NativeScanKernel* kernel, const ScanDims& d,
                                    std::span<const float> x, std::span<const float> a_bar,
                                    std::span<const float> b_bar, std::span<const float> c,
                                    std::span<float> y) {
  if (!kernel) {
    scan_recurrent<float>(d, x, a_bar, b_bar, c, y);
    return;
  }
  if (const int32_t status = kernel->run(d, x, a_bar, b_bar, c, y); status != XRF_SCAN_OK) {
    throw Error("native scan kernel '" + kernel->path() + "' failed with status " +
                std::to_string(status));
  }
}

}  // namespace xrf::ssm
