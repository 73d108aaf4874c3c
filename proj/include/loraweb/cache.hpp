#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "loraweb/transfer.hpp"

namespace loraweb::cache {

// Throws ValidationError for names that could escape the cache directory or
// break the index format.
void validate_page_name(std::string_view name);

// Page name -> version.
class CacheIndex {
 public:
  std::optional<std::uint32_t> find(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  void set(const std::string& name, std::uint32_t version);
  bool erase(const std::string& name) { return entries_.erase(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<std::pair<std::string, std::uint32_t>> sorted() const;

  // One "name\tversion\n" line per entry, sorted by name.
  std::string serialize() const;
  // Throws DecodeError on malformed lines.
  static CacheIndex parse(std::string_view text);

  friend bool operator==(const CacheIndex&, const CacheIndex&) = default;

 private:
  std::unordered_map<std::string, std::uint32_t> entries_;
};

class Storage {
 public:
  virtual ~Storage() = default;
  // nullopt when the key does not exist; throws Error when it exists but
  // cannot be read.
  virtual std::optional<Bytes> read(const std::string& key) const = 0;
  // Replaces the value so that readers see either the old or the new bytes.
  virtual void write_atomic(const std::string& key, const Bytes& value) = 0;
  virtual void remove(const std::string& key) = 0;
};

class MemoryStorage : public Storage {
 public:
  std::optional<Bytes> read(const std::string& key) const override;
  void write_atomic(const std::string& key, const Bytes& value) override;
  void remove(const std::string& key) override;

  // Test hooks.
  void make_unreadable(const std::string& key) { unreadable_.insert(key); }
  void put_raw(const std::string& key, Bytes value) { data_[key] = std::move(value); }

 private:
  std::unordered_map<std::string, Bytes> data_;
  std::set<std::string> unreadable_;
};

class DirectoryStorage : public Storage {
 public:
  explicit DirectoryStorage(std::filesystem::path dir);
  std::optional<Bytes> read(const std::string& key) const override;
  void write_atomic(const std::string& key, const Bytes& value) override;
  void remove(const std::string& key) override;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline constexpr std::string_view kIndexKey = ".index";

// Per-client page cache: page bodies stored under their names plus a
// persisted index loaded once at construction.
class CacheStore {
 public:
  explicit CacheStore(std::shared_ptr<Storage> storage);

  const CacheIndex& index() const { return index_; }
  std::optional<std::uint32_t> lookup(const std::string& name) const { return index_.find(name); }

  // Stores the body and records the version. Throws ValidationError for bad
  // names or empty bodies.
  void put(const std::string& name, std::uint32_t version, const Bytes& body);
  // Throws NotFoundError for names not in the index and Error when the page
  // file is missing or unreadable.
  Bytes get(const std::string& name) const;
  void evict(const std::string& name);

  // Persisted index, re-read from storage. Missing file -> empty; corrupt
  // file -> empty plus a warning.
  CacheIndex read_index() const;
  void write_index(const CacheIndex& index);

  const std::vector<std::string>& warnings() const { return warnings_; }
  Storage& storage() { return *storage_; }

 private:
  std::shared_ptr<Storage> storage_;
  CacheIndex index_;
  mutable std::vector<std::string> warnings_;
};

CacheIndex index_read(const CacheStore& store);
void index_write(const CacheIndex& index, CacheStore& store);
void page_write(CacheStore& store, const std::string& name, std::uint32_t version, const Bytes& body);
Bytes page_read(const CacheStore& store, const std::string& name);

enum class Source { cache_hit, fetched };
std::string_view source_name(Source source);

struct FetchResult {
  bool ok = false;
  bool not_found = false;
  Source source = Source::fetched;
  Bytes body;
  std::optional<std::uint32_t> version;  // version the body was cached under
  bool validation_timed_out = false;
  bool evicted_unreadable = false;
  std::size_t data_frames = 0;
};

// Client side of one page request: version check against the cache, then a
// full transfer when needed. After a fetch the server appends a VERSION_REPLY
// trailer carrying the version of the body it sent; the page is cached under
// that version when the trailer arrives.
class PageFetch : public transfer::Exchange {
 public:
  enum class Phase { idle, validating, transferring, done };

  // `store` may be null to disable caching.
  PageFetch(NodeId self, NodeId server, std::string url, transfer::ArqParams params, CacheStore* store);

  transfer::Frames begin(SimTime now) override;
  transfer::Frames on_frame(const transfer::Frame& frame, SimTime now) override;
  transfer::Frames on_timeout(SimTime now) override;
  Duration timeout() const override;
  bool listening() const override;
  bool completed() const override;
  bool finished() const override;
  std::optional<SimTime> first_response() const override;
  std::string summary() const override;

  Phase phase() const { return phase_; }
  const FetchResult& result() const { return result_; }
  const std::string& url() const { return url_; }

 private:
  transfer::Frames start_transfer(SimTime now);
  void absorb_transfer();
  void cache_trailer();

  NodeId self_;
  NodeId server_;
  std::string url_;
  transfer::ArqParams params_;
  CacheStore* store_;
  Phase phase_ = Phase::idle;
  std::optional<std::uint32_t> cached_version_;
  int query_retries_ = 0;
  std::optional<SimTime> first_response_;
  std::unique_ptr<transfer::TransferExchange> transfer_;
  bool absorbed_ = false;
  bool trailer_handled_ = false;
  FetchResult result_;
};

// Fetches `url` through a client station `client` over `net`, where a server
// station with id `server` is already attached. Runs until the client
// station is released.
FetchResult get_web_page(radio::Network& net, NodeId client, NodeId server, const std::string& url,
                         CacheStore* store, const transfer::ArqParams& params);

}  // namespace loraweb::cache
