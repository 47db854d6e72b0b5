#include "optithreat/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <memory>
#include <mutex>

namespace optithreat::fft {
namespace {

// The FFTW planner keeps global state; execution of distinct plans is safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex, FftwFree>;

Buffer allocate(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!p) throw std::bad_alloc();
  return Buffer(p);
}

class Plan {
 public:
  explicit Plan(fftw_plan p) : plan_(p) {}
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

void transform_2d(Array2D<Complex>& data, int sign) {
  const auto n = data.size();
  if (n == 0) return;
  Buffer buf = allocate(n);
  std::unique_ptr<Plan> plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = std::make_unique<Plan>(fftw_plan_dft_2d(static_cast<int>(data.rows()),
                                                   static_cast<int>(data.cols()), buf.get(),
                                                   buf.get(), sign, FFTW_ESTIMATE));
  }
  // std::complex<double> is layout-compatible with fftw_complex.
  std::memcpy(buf.get(), data.data().data(), sizeof(fftw_complex) * n);
  plan->execute();
  std::memcpy(static_cast<void*>(data.data().data()), buf.get(), sizeof(fftw_complex) * n);
}

}  // namespace

void forward_2d(Array2D<Complex>& data) { transform_2d(data, FFTW_FORWARD); }

void inverse_2d(Array2D<Complex>& data) {
  transform_2d(data, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data.data()) v *= scale;
}

std::vector<Complex> forward_1d(std::span<const Complex> input) {
  const auto n = input.size();
  std::vector<Complex> out(n);
  if (n == 0) return out;
  Buffer buf = allocate(n);
  std::unique_ptr<Plan> plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = std::make_unique<Plan>(
        fftw_plan_dft_1d(static_cast<int>(n), buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE));
  }
  std::memcpy(buf.get(), input.data(), sizeof(fftw_complex) * n);
  plan->execute();
  std::memcpy(static_cast<void*>(out.data()), buf.get(), sizeof(fftw_complex) * n);
  return out;
}

std::vector<Complex> forward_1d_real(std::span<const double> input) {
  std::vector<Complex> tmp(input.begin(), input.end());
  return forward_1d(tmp);
}

}  // namespace optithreat::fft
