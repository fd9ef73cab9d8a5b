#include "dfcausal/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

namespace dfc {

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

namespace {
std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}
WarningSink& sink() {
  static WarningSink s = [](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); };
  return s;
}
}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  sink() = std::move(s);
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  if (sink()) sink()(message);
}

void validate_subsystems(int d, const std::vector<Subsystem>& groups, bool require_cover) {
  std::vector<int> owner(static_cast<std::size_t>(std::max(d, 0)), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    if (grp.name.empty()) fail(ErrorKind::Precondition, "subsystem with empty name");
    if (grp.components.empty())
      fail(ErrorKind::Precondition, "subsystem '" + grp.name + "' has no components");
    for (std::size_t h = 0; h < g; ++h)
      if (groups[h].name == grp.name)
        fail(ErrorKind::Precondition, "duplicate subsystem name '" + grp.name + "'");
    for (int c : grp.components) {
      if (c < 0 || c >= d)
        fail(ErrorKind::Precondition, "subsystem '" + grp.name + "' index " + std::to_string(c) +
                                          " out of range 0.." + std::to_string(d - 1));
      auto& o = owner[static_cast<std::size_t>(c)];
      if (o >= 0)
        fail(ErrorKind::Precondition, "component " + std::to_string(c) + " belongs to both '" +
                                          groups[static_cast<std::size_t>(o)].name + "' and '" +
                                          grp.name + "'");
      o = static_cast<int>(g);
    }
  }
  if (require_cover)
    for (int c = 0; c < d; ++c)
      if (owner[static_cast<std::size_t>(c)] < 0)
        fail(ErrorKind::Precondition, "component " + std::to_string(c) + " is in no subsystem");
}

const Subsystem& find_subsystem(const std::vector<Subsystem>& groups, const std::string& name) {
  for (const auto& g : groups)
    if (g.name == name) return g;
  std::string known;
  for (const auto& g : groups) known += (known.empty() ? "" : ", ") + g.name;
  fail(ErrorKind::Precondition, "unknown subsystem '" + name + "' (known: " + known + ")");
}

unsigned default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1U : n;
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = default_workers();
  const std::size_t threads = std::min<std::size_t>(workers, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

}  // namespace dfc
