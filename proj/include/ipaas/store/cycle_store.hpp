#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "ipaas/store/cycle_record.hpp"

namespace ipaas::store {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IllegalTransitionError : public StoreError {
 public:
  using StoreError::StoreError;
};

/// Write based on a revision that is no longer current (including a second
/// insert of an existing cycle).
class ConflictError : public StoreError {
 public:
  using StoreError::StoreError;
};

struct QueryFilter {
  std::optional<CycleStatus> status;
  std::optional<std::string> source;
  std::optional<std::int64_t> from_ms;  // inclusive, on the first timestamp
  std::optional<std::int64_t> to_ms;    // inclusive
};

struct ImportReport {
  std::size_t imported = 0;
  std::vector<std::pair<std::size_t, std::string>> rejects;  // 1-based line, reason
};

/// Document store for cycle records backed by one append-only file (or
/// memory only when no path is given). Each write appends the full record
/// with its new revision; reopening replays the file. Compaction rewrites the
/// file keeping the latest revision per cycle.
class CycleStore {
 public:
  CycleStore();
  explicit CycleStore(std::filesystem::path path);
  ~CycleStore();

  CycleStore(const CycleStore&) = delete;
  CycleStore& operator=(const CycleStore&) = delete;

  /// Inserts (revision 0) or updates (revision == current). Returns the new
  /// revision; the write is flushed to disk before returning.
  std::uint64_t append(CycleRecord record);

  std::optional<CycleRecord> get(const std::string& cycle_id) const;
  std::vector<CycleRecord> query(const QueryFilter& filter = {}) const;
  std::vector<std::uint64_t> revisions(const std::string& cycle_id) const;
  std::size_t size() const;

  std::size_t export_to(const std::filesystem::path& path, const QueryFilter& filter = {}) const;
  ImportReport import_from(const std::filesystem::path& path);

  void compact();

  /// Waits until the record exists and satisfies `pred`.
  std::optional<CycleRecord> wait_for(const std::string& cycle_id,
                                      const std::function<bool(const CycleRecord&)>& pred,
                                      std::chrono::milliseconds timeout) const;

 private:
  void load();
  void write_line(const CycleRecord& record);
  void maybe_compact();

  std::optional<std::filesystem::path> path_;
  std::FILE* file_ = nullptr;
  std::size_t lines_written_ = 0;

  mutable std::shared_mutex mutex_;
  std::map<std::string, CycleRecord> latest_;
  std::map<std::string, std::vector<std::uint64_t>> history_;
  std::vector<std::string> insertion_order_;

  mutable std::mutex wait_mutex_;
  mutable std::condition_variable changed_;
};

}  // namespace ipaas::store
