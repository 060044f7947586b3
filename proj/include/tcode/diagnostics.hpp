#pragma once

// Structured diagnostics. Every record is a JSON object with at least
// "level" and "event"; the default sink writes one line per record to stderr.

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace tcode::diag {

using Sink = std::function<void(const nlohmann::json&)>;

namespace detail {
inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](const nlohmann::json& record) { std::cerr << record.dump() << '\n'; };
  return s;
}
}  // namespace detail

/// Replaces the process-wide sink and returns the previous one.
inline Sink set_sink(Sink sink) {
  std::lock_guard lock(detail::sink_mutex());
  return std::exchange(detail::sink(), std::move(sink));
}

inline void emit(std::string level, std::string event, nlohmann::json fields = nlohmann::json::object()) {
  fields["level"] = std::move(level);
  fields["event"] = std::move(event);
  std::lock_guard lock(detail::sink_mutex());
  if (detail::sink()) detail::sink()(fields);
}

inline void warn(std::string event, nlohmann::json fields = nlohmann::json::object()) {
  emit("warning", std::move(event), std::move(fields));
}

inline void info(std::string event, nlohmann::json fields = nlohmann::json::object()) {
  emit("info", std::move(event), std::move(fields));
}

/// RAII capture of records, for tests and quiet runs.
class ScopedCapture {
public:
  ScopedCapture()
      : previous_(set_sink([this](const nlohmann::json& r) { records_.push_back(r); })) {}
  ~ScopedCapture() { set_sink(std::move(previous_)); }
  ScopedCapture(const ScopedCapture&) = delete;
  ScopedCapture& operator=(const ScopedCapture&) = delete;

  const std::vector<nlohmann::json>& records() const { return records_; }
  std::size_t count(const std::string& event) const {
    std::size_t n = 0;
    for (const auto& r : records_) n += r.value("event", "") == event;
    return n;
  }

private:
  std::vector<nlohmann::json> records_;
  Sink previous_;
};

}  // namespace tcode::diag
