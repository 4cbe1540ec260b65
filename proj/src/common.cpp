#include "driftlab/common.hpp"

#include <atomic>
#include <cstdio>
#include <thread>

namespace driftlab {

namespace {
std::atomic<unsigned> g_threads{1};
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::OutOfBand: return "OutOfBand";
    case ErrorCode::GapViolation: return "GapViolation";
    case ErrorCode::EscapedChannel: return "EscapedChannel";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ContinuationFailed: return "ContinuationFailed";
    case ErrorCode::DomainExceeded: return "DomainExceeded";
    case ErrorCode::BandOverflow: return "BandOverflow";
    case ErrorCode::GenerationLimit: return "GenerationLimit";
    case ErrorCode::PaddingFailed: return "PaddingFailed";
    case ErrorCode::ShootingFailed: return "ShootingFailed";
    case ErrorCode::BoundViolated: return "BoundViolated";
    case ErrorCode::FewerFound: return "FewerFound";
    case ErrorCode::GraphFold: return "GraphFold";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

void set_thread_count(unsigned n) { g_threads = n == 0 ? 1 : n; }
unsigned thread_count() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  unsigned nt = std::min<std::size_t>(g_threads.load(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // static block partition; first exception wins
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(nt);
  for (unsigned t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      std::size_t lo = n * t / nt, hi = n * (t + 1) / nt;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace driftlab
