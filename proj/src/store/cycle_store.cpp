#include "ipaas/store/cycle_store.hpp"

#include <algorithm>
#include <fstream>
#include <unistd.h>

#include <spdlog/spdlog.h>

namespace ipaas::store {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCompactMinLines = 256;

std::string store_line(const CycleRecord& r) {
  return "{\"_rev\":" + std::to_string(r.revision) + ",\"record\":" + to_dataset_line(r) + "}";
}

bool matches(const CycleRecord& r, const QueryFilter& f) {
  if (f.status && r.status != *f.status) return false;
  if (f.source && r.source != *f.source) return false;
  const auto ts = r.first_timestamp();
  if (f.from_ms && ts < *f.from_ms) return false;
  if (f.to_ms && ts > *f.to_ms) return false;
  return true;
}

}  // namespace

CycleStore::CycleStore() = default;

CycleStore::CycleStore(fs::path path) : path_(std::move(path)) {
  if (path_->has_parent_path()) fs::create_directories(path_->parent_path());
  load();
  file_ = std::fopen(path_->c_str(), "ab");
  if (file_ == nullptr) throw StoreError("cannot open store file " + path_->string());
}

CycleStore::~CycleStore() {
  if (file_ != nullptr) std::fclose(file_);
}

void CycleStore::load() {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CycleRecord r = from_dataset_line(j.at("record").dump());
      r.revision = j.at("_rev").get<std::uint64_t>();
      auto& hist = history_[r.cycle_id];
      if (!hist.empty() && r.revision != hist.back() + 1) {
        throw StoreError("non-linear revision " + std::to_string(r.revision));
      }
      if (hist.empty()) insertion_order_.push_back(r.cycle_id);
      hist.push_back(r.revision);
      latest_[r.cycle_id] = std::move(r);
      ++lines_written_;
    } catch (const std::exception& e) {
      // A torn final line from an interrupted write is dropped.
      spdlog::warn("store {}: skipping line {}: {}", path_->string(), number, e.what());
    }
  }
}

void CycleStore::write_line(const CycleRecord& r) {
  if (file_ == nullptr) return;
  const std::string line = store_line(r) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw StoreError("write to " + path_->string() + " failed");
  }
  ::fsync(::fileno(file_));
  ++lines_written_;
}

std::uint64_t CycleStore::append(CycleRecord record) {
  try {
    check_invariants(record);
  } catch (const RecordError& e) {
    throw StoreError(e.what());
  }

  std::uint64_t revision = 0;
  {
    std::unique_lock lock(mutex_);
    auto it = latest_.find(record.cycle_id);
    if (it == latest_.end()) {
      if (record.revision != 0) {
        throw ConflictError("cycle " + record.cycle_id + " does not exist (revision " +
                            std::to_string(record.revision) + " given)");
      }
      record.revision = 1;
    } else {
      const CycleRecord& current = it->second;
      if (record.revision != current.revision) {
        throw ConflictError("cycle " + record.cycle_id + ": write based on revision " +
                            std::to_string(record.revision) + ", current is " +
                            std::to_string(current.revision));
      }
      if (!legal_transition(current.status, record.status)) {
        throw IllegalTransitionError("cycle " + record.cycle_id + ": illegal transition " +
                                     to_string(current.status) + " -> " + to_string(record.status));
      }
      record.revision = current.revision + 1;
    }
    write_line(record);
    revision = record.revision;
    if (revision == 1) insertion_order_.push_back(record.cycle_id);
    history_[record.cycle_id].push_back(revision);
    latest_[record.cycle_id] = std::move(record);
    maybe_compact();
  }
  {
    std::lock_guard lock(wait_mutex_);
  }
  changed_.notify_all();
  return revision;
}

std::optional<CycleRecord> CycleStore::get(const std::string& cycle_id) const {
  std::shared_lock lock(mutex_);
  auto it = latest_.find(cycle_id);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

std::vector<CycleRecord> CycleStore::query(const QueryFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<CycleRecord> out;
  for (const auto& id : insertion_order_) {
    const auto& r = latest_.at(id);
    if (matches(r, filter)) out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const CycleRecord& a, const CycleRecord& b) {
    return a.first_timestamp() < b.first_timestamp();
  });
  return out;
}

std::vector<std::uint64_t> CycleStore::revisions(const std::string& cycle_id) const {
  std::shared_lock lock(mutex_);
  auto it = history_.find(cycle_id);
  return it == history_.end() ? std::vector<std::uint64_t>{} : it->second;
}

std::size_t CycleStore::size() const {
  std::shared_lock lock(mutex_);
  return latest_.size();
}

std::size_t CycleStore::export_to(const fs::path& path, const QueryFilter& filter) const {
  const auto records = query(filter);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  for (const auto& r : records) out << to_dataset_line(r) << '\n';
  return records.size();
}

ImportReport CycleStore::import_from(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot read " + path.string());
  ImportReport report;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      CycleRecord r = from_dataset_line(line);
      r.revision = 0;
      append(std::move(r));
      ++report.imported;
    } catch (const std::exception& e) {
      report.rejects.emplace_back(number, e.what());
    }
  }
  return report;
}

void CycleStore::maybe_compact() {
  if (file_ == nullptr) return;
  if (lines_written_ < kCompactMinLines || lines_written_ < 2 * latest_.size()) return;
  const fs::path tmp = path_->string() + ".compact";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& id : insertion_order_) out << store_line(latest_.at(id)) << '\n';
    out.flush();
    if (!out) throw StoreError("compaction of " + path_->string() + " failed");
  }
  std::fclose(file_);
  fs::rename(tmp, *path_);
  file_ = std::fopen(path_->c_str(), "ab");
  if (file_ == nullptr) throw StoreError("cannot reopen store file " + path_->string());
  lines_written_ = latest_.size();
}

void CycleStore::compact() {
  std::unique_lock lock(mutex_);
  if (file_ == nullptr) return;
  const auto saved = lines_written_;
  lines_written_ = std::max<std::size_t>({saved, kCompactMinLines, 2 * latest_.size()});
  maybe_compact();
}

std::optional<CycleRecord> CycleStore::wait_for(const std::string& cycle_id,
                                                const std::function<bool(const CycleRecord&)>& pred,
                                                std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(wait_mutex_);
  while (true) {
    if (auto r = get(cycle_id); r && pred(*r)) return r;
    if (changed_.wait_until(lock, deadline) == std::cv_status::timeout) {
      if (auto r = get(cycle_id); r && pred(*r)) return r;
      return std::nullopt;
    }
  }
}

}  // namespace ipaas::store
