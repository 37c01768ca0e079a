#pragma once

#include <exception>
#include <mutex>

namespace spinshuffle {

// Exceptions must not escape an OpenMP region; the first one is rethrown.
class FirstError {
public:
  void capture()
  {
    std::lock_guard<std::mutex> lock(m_);
    if (!e_) {
      e_ = std::current_exception();
    }
  }
  void rethrow() const
  {
    if (e_) {
      std::rethrow_exception(e_);
    }
  }

private:
  std::mutex m_;
  std::exception_ptr e_;
};

} // namespace spinshuffle
