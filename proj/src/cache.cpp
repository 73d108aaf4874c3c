#include "loraweb/cache.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <system_error>

namespace loraweb::cache {

using framing::FrameKind;
using transfer::Frame;
using transfer::Frames;

void validate_page_name(std::string_view name) {
  if (name.empty()) throw ValidationError("page name is empty");
  if (name.size() > framing::kMaxPayload)
    throw ValidationError("page name longer than " + std::to_string(framing::kMaxPayload) + " bytes");
  if (name == "." || name == ".." || name.front() == '.')
    throw ValidationError("page name may not start with '.': " + std::string(name));
  for (unsigned char c : name) {
    if (c == '/' || c == '\\' || c < 0x21 || c == 0x7f)
      throw ValidationError("page name contains a path separator, whitespace or control character: " +
                            std::string(name));
  }
}

// --- CacheIndex ---------------------------------------------------------------

std::optional<std::uint32_t> CacheIndex::find(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CacheIndex::set(const std::string& name, std::uint32_t version) {
  validate_page_name(name);
  entries_[name] = version;
}

std::vector<std::pair<std::string, std::uint32_t>> CacheIndex::sorted() const {
  std::vector<std::pair<std::string, std::uint32_t>> out(entries_.begin(), entries_.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::string CacheIndex::serialize() const {
  std::string out;
  for (const auto& [name, version] : sorted()) {
    out += name;
    out += '\t';
    out += std::to_string(version);
    out += '\n';
  }
  return out;
}

CacheIndex CacheIndex::parse(std::string_view text) {
  CacheIndex index;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw DecodeError("index line " + std::to_string(line_no) + " not terminated");
    const std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl + 1);
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw DecodeError("index line " + std::to_string(line_no) + " has no tab");
    const std::string name(line.substr(0, tab));
    const std::string_view digits = line.substr(tab + 1);
    std::uint32_t version = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), version);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size())
      throw DecodeError("index line " + std::to_string(line_no) + " has a bad version");
    try {
      validate_page_name(name);
    } catch (const ValidationError& e) {
      throw DecodeError("index line " + std::to_string(line_no) + ": " + e.what());
    }
    if (index.contains(name)) throw DecodeError("index line " + std::to_string(line_no) + " repeats " + name);
    index.set(name, version);
  }
  return index;
}

// --- Storage ------------------------------------------------------------------

std::optional<Bytes> MemoryStorage::read(const std::string& key) const {
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  if (unreadable_.count(key)) throw Error("cannot read " + key);
  return it->second;
}

void MemoryStorage::write_atomic(const std::string& key, const Bytes& value) {
  data_[key] = value;
  unreadable_.erase(key);
}

void MemoryStorage::remove(const std::string& key) {
  data_.erase(key);
  unreadable_.erase(key);
}

DirectoryStorage::DirectoryStorage(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::optional<Bytes> DirectoryStorage::read(const std::string& key) const {
  const auto path = dir_ / key;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read error on " + path.string());
  return out;
}

void DirectoryStorage::write_atomic(const std::string& key, const Bytes& value) {
  const auto path = dir_ / key;
  const auto tmp = dir_ / (".tmp-" + key);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(value.data()), static_cast<std::streamsize>(value.size()));
    out.flush();
    if (!out) throw Error("write error on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}

void DirectoryStorage::remove(const std::string& key) {
  std::error_code ec;
  std::filesystem::remove(dir_ / key, ec);
}

// --- CacheStore ---------------------------------------------------------------

CacheStore::CacheStore(std::shared_ptr<Storage> storage) : storage_(std::move(storage)) {
  if (!storage_) throw ConfigError("cache store needs a storage backend");
  index_ = read_index();
}

CacheIndex CacheStore::read_index() const {
  std::optional<Bytes> raw;
  try {
    raw = storage_->read(std::string(kIndexKey));
  } catch (const Error& e) {
    warnings_.push_back(std::string("index unreadable, starting cold: ") + e.what());
    return {};
  }
  if (!raw) return {};
  try {
    return CacheIndex::parse(to_string(*raw));
  } catch (const DecodeError& e) {
    warnings_.push_back(std::string("index corrupt, starting cold: ") + e.what());
    return {};
  }
}

void CacheStore::write_index(const CacheIndex& index) {
  storage_->write_atomic(std::string(kIndexKey), to_bytes(index.serialize()));
}

void CacheStore::put(const std::string& name, std::uint32_t version, const Bytes& body) {
  validate_page_name(name);
  if (body.empty()) throw ValidationError("cannot cache an empty body");
  // Drop the entry first so a crash between the two writes never pairs the
  // new body with the old version.
  if (index_.erase(name)) write_index(index_);
  storage_->write_atomic(name, body);
  index_.set(name, version);
  write_index(index_);
}

Bytes CacheStore::get(const std::string& name) const {
  validate_page_name(name);
  if (!index_.contains(name)) throw NotFoundError("page not cached: " + name);
  auto body = storage_->read(name);
  if (!body) throw Error("cache file missing for " + name);
  return *body;
}

void CacheStore::evict(const std::string& name) {
  if (index_.erase(name)) write_index(index_);
  storage_->remove(name);
}

CacheIndex index_read(const CacheStore& store) { return store.read_index(); }
void index_write(const CacheIndex& index, CacheStore& store) { store.write_index(index); }
void page_write(CacheStore& store, const std::string& name, std::uint32_t version, const Bytes& body) {
  store.put(name, version, body);
}
Bytes page_read(const CacheStore& store, const std::string& name) { return store.get(name); }

std::string_view source_name(Source source) { return source == Source::cache_hit ? "cache_hit" : "fetched"; }

// --- PageFetch ----------------------------------------------------------------

PageFetch::PageFetch(NodeId self, NodeId server, std::string url, transfer::ArqParams params, CacheStore* store)
    : self_(self), server_(server), url_(std::move(url)), params_(params), store_(store) {
  params_.validate();
}

Frames PageFetch::begin(SimTime now) {
  if (phase_ != Phase::idle) throw Error("fetch already started");
  if (store_) cached_version_ = store_->lookup(url_);
  if (cached_version_) {
    phase_ = Phase::validating;
    return {Frame{self_, server_, FrameKind::version_query, 0, to_bytes(url_)}};
  }
  return start_transfer(now);
}

Frames PageFetch::start_transfer(SimTime now) {
  phase_ = Phase::transferring;
  transfer_ = std::make_unique<transfer::TransferExchange>(self_, server_, url_, params_, store_ != nullptr);
  return transfer_->begin(now);
}

Frames PageFetch::on_frame(const Frame& f, SimTime now) {
  if (f.dst != self_ || f.src != server_) return {};
  if (phase_ == Phase::validating) {
    if (f.kind != FrameKind::version_reply) return {};
    if (!first_response_) first_response_ = now;
    const auto server_version = transfer::decode_version(f.payload);
    if (server_version && server_version == cached_version_) {
      try {
        result_.body = store_->get(url_);
        result_.ok = true;
        result_.source = Source::cache_hit;
        result_.version = cached_version_;
        phase_ = Phase::done;
        return {};
      } catch (const Error&) {
        store_->evict(url_);
        result_.evicted_unreadable = true;
      }
    }
    return start_transfer(now);
  }
  if (phase_ != Phase::transferring) return {};
  Frames out = transfer_->on_frame(f, now);
  if (!first_response_ && transfer_->first_response()) first_response_ = transfer_->first_response();
  absorb_transfer();
  cache_trailer();
  return out;
}

Frames PageFetch::on_timeout(SimTime now) {
  if (phase_ == Phase::validating) {
    if (query_retries_ < params_.max_retry) {
      ++query_retries_;
      return {Frame{self_, server_, FrameKind::version_query, static_cast<std::uint16_t>(query_retries_),
                    to_bytes(url_)}};
    }
    result_.validation_timed_out = true;
    return start_transfer(now);
  }
  if (phase_ != Phase::transferring) return {};
  Frames out = transfer_->on_timeout(now);
  absorb_transfer();
  cache_trailer();
  return out;
}

void PageFetch::absorb_transfer() {
  if (absorbed_ || !transfer_->completed()) return;
  absorbed_ = true;
  const auto& rx = transfer_->receiver();
  result_.data_frames = rx.chunks().size();
  if (transfer_->success()) {
    result_.body = rx.body();
    result_.not_found = transfer::is_not_found(result_.body);
    result_.ok = !result_.not_found;
    result_.source = Source::fetched;
    if (result_.not_found && store_) store_->evict(url_);
  }
}

void PageFetch::cache_trailer() {
  if (trailer_handled_ || !store_ || !transfer_ || !result_.ok) return;
  if (transfer_->trailer_version()) {
    trailer_handled_ = true;
    store_->put(url_, *transfer_->trailer_version(), result_.body);
    result_.version = transfer_->trailer_version();
  } else if (transfer_->trailer_not_found()) {
    trailer_handled_ = true;
  }
}

Duration PageFetch::timeout() const {
  if (phase_ == Phase::validating) return params_.receive_timeout;
  if (phase_ == Phase::transferring) return transfer_->timeout();
  return Duration::zero();
}

bool PageFetch::listening() const {
  if (phase_ == Phase::validating) return true;
  return phase_ == Phase::transferring && transfer_->listening();
}

bool PageFetch::completed() const {
  if (phase_ == Phase::done) return true;
  return phase_ == Phase::transferring && transfer_->completed();
}

bool PageFetch::finished() const {
  if (phase_ == Phase::done) return true;
  return phase_ == Phase::transferring && transfer_->finished();
}

std::optional<SimTime> PageFetch::first_response() const { return first_response_; }

std::string PageFetch::summary() const {
  std::string s = "kind=page url=" + url_;
  s += result_.ok ? " outcome=success" : (result_.not_found ? " outcome=not_found" : " outcome=failure");
  s += " source=" + std::string(source_name(result_.source));
  s += " bytes=" + std::to_string(result_.ok ? result_.body.size() : 0);
  s += " chunks=" + std::to_string(result_.data_frames);
  return s;
}

// --- get_web_page -------------------------------------------------------------

FetchResult get_web_page(radio::Network& net, NodeId client, NodeId server, const std::string& url,
                         CacheStore* store, const transfer::ArqParams& params) {
  validate_page_name(url);
  transfer::ExchangeStation station(client);
  net.attach(station);
  FetchResult result;
  bool released = false;
  station.start(
      std::make_unique<PageFetch>(client, server, url, params, store), net, net.next_request_id(), {},
      [&](transfer::Exchange& ex, radio::Network&) {
        result = static_cast<PageFetch&>(ex).result();
        released = true;
      });
  // Detaching purges the node's queue, so let the final ACK leave first.
  net.run_until([&] { return released && !net.node_transmitting(client); }, SimTime::max());
  net.detach(client);
  if (!released) throw Error("fetch of " + url + " stalled: event queue drained");
  return result;
}

}  // namespace loraweb::cache
