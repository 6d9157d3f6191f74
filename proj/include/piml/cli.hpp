#pragma once

#include <filesystem>
#include <iosfwd>

namespace piml {

inline constexpr const char* kVersion = "0.1.0";

// Entry point of the `piml` tool. Returns the process exit code:
// 0 success, 1 IO/parse errors, 2 validation failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Exclusive ownership of an output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace piml
