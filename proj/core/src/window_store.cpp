#include "pars/window_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pars/error.hpp"

namespace pars {

namespace {

constexpr char kMagic[8] = {'P', 'W', 'S', 'T', 'O', 'R', 'E', '1'};
constexpr uint32_t kVersion = 1;
constexpr size_t kSubjectBytes = 32;  // NUL-padded, so ids hold at most 31 chars

static_assert(std::endian::native == std::endian::little,
              "store format is little-endian");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptStore(path + ": truncated while reading " + what);
  return v;
}

}  // namespace

void WindowStore::validate() const {
  if (n_channels < 1) throw InvalidInput("store: n_channels must be >= 1");
  if (window_len < 1) throw InvalidInput("store: window_len must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("store: sample rate must be positive");
  if (n_classes < 0 || n_classes > 254)
    throw InvalidInput("store: n_classes must be in [0, 254]");
  for (size_t i = 0; i < windows.size(); ++i) {
    const MultiChannelWindow& w = windows[i];
    std::string where = "store window " + std::to_string(i);
    if (w.n_channels() != n_channels) throw InvalidInput(where + ": channel count mismatch");
    if (w.length() != window_len) throw InvalidInput(where + ": length mismatch");
    if (w.sample_rate_hz() != sample_rate_hz) throw InvalidInput(where + ": sample rate mismatch");
    if (w.label != kUnlabeled && (w.label < 0 || w.label >= n_classes))
      throw InvalidInput(where + ": label out of range");
    if (w.subject_id.empty() || w.subject_id.size() >= kSubjectBytes)
      throw InvalidInput(where + ": subject id must be 1..31 bytes");
    w.validate();
  }
}

void write_store(const std::string& path, const WindowStore& store) {
  store.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open for writing: " + path);

  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint32_t>(out, static_cast<uint32_t>(store.n_channels));
  write_pod<uint64_t>(out, static_cast<uint64_t>(store.window_len));
  write_pod<double>(out, store.sample_rate_hz);
  write_pod<uint32_t>(out, static_cast<uint32_t>(store.n_classes));
  write_pod<uint64_t>(out, store.windows.size());

  std::vector<float> buf(static_cast<size_t>(store.window_len));
  for (const MultiChannelWindow& w : store.windows) {
    for (const Sequence& ch : w.channels) {
      for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(ch.samples[i]);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    write_pod<uint8_t>(out, static_cast<uint8_t>(w.label));
    char sid[kSubjectBytes] = {};
    std::memcpy(sid, w.subject_id.data(), w.subject_id.size());
    out.write(sid, sizeof(sid));
  }
  if (!out) throw InvalidInput("write failed: " + path);
}

WindowStore read_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open store: " + path);

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CorruptStore(path + ": bad magic");
  uint32_t version = read_pod<uint32_t>(in, path, "version");
  if (version != kVersion)
    throw CorruptStore(path + ": unsupported version " + std::to_string(version));

  WindowStore store;
  store.n_channels = read_pod<uint32_t>(in, path, "channel count");
  store.window_len = static_cast<int64_t>(read_pod<uint64_t>(in, path, "window length"));
  store.sample_rate_hz = read_pod<double>(in, path, "sample rate");
  store.n_classes = static_cast<int>(read_pod<uint32_t>(in, path, "class count"));
  uint64_t count = read_pod<uint64_t>(in, path, "window count");
  if (store.n_channels < 1 || store.window_len < 1 || !(store.sample_rate_hz > 0.0) ||
      store.n_classes > 254)
    throw CorruptStore(path + ": invalid header fields");

  store.windows.reserve(count);
  std::vector<float> buf(static_cast<size_t>(store.window_len));
  for (uint64_t r = 0; r < count; ++r) {
    MultiChannelWindow w;
    w.channels.resize(static_cast<size_t>(store.n_channels));
    for (Sequence& ch : w.channels) {
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!in) throw CorruptStore(path + ": truncated in window " + std::to_string(r));
      ch.samples.assign(buf.begin(), buf.end());
      ch.sample_rate_hz = store.sample_rate_hz;
    }
    uint8_t label = read_pod<uint8_t>(in, path, "label");
    if (label != kUnlabeled && label >= store.n_classes)
      throw CorruptStore(path + ": label " + std::to_string(int(label)) +
                         " out of range in window " + std::to_string(r));
    w.label = label;
    char sid[kSubjectBytes];
    in.read(sid, sizeof(sid));
    if (!in) throw CorruptStore(path + ": truncated subject id in window " + std::to_string(r));
    if (sid[kSubjectBytes - 1] != '\0')
      throw CorruptStore(path + ": unterminated subject id in window " + std::to_string(r));
    w.subject_id = sid;
    if (w.subject_id.empty())
      throw CorruptStore(path + ": empty subject id in window " + std::to_string(r));
    store.windows.push_back(std::move(w));
  }
  // Trailing garbage would mean the count field lies about the payload.
  in.peek();
  if (!in.eof()) throw CorruptStore(path + ": trailing bytes after last window");
  return store;
}

SplitManifest split_by_subject(const std::vector<std::string>& subjects,
                               const std::vector<double>& fractions, uint64_t seed) {
  if (fractions.empty() || fractions.size() > 3)
    throw InvalidInput("split: need 1 to 3 fractions");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || f > 1.0) throw InvalidInput("split: fractions must lie in [0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("split: fractions must sum to 1");

  std::vector<std::string> pool(subjects);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  size_t n_nonzero = 0;
  for (double f : fractions)
    if (f > 0.0) ++n_nonzero;
  if (pool.size() < n_nonzero)
    throw InvalidInput("split: fewer subjects (" + std::to_string(pool.size()) +
                       ") than non-empty splits (" + std::to_string(n_nonzero) + ")");

  Rng rng(seed);
  rng.shuffle(pool);

  int64_t n = static_cast<int64_t>(pool.size());
  std::vector<int64_t> sizes(fractions.size());
  int64_t assigned = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    sizes[i] = static_cast<int64_t>(std::floor(fractions[i] * static_cast<double>(n)));
    assigned += sizes[i];
  }
  // Remainder goes to the largest fractions, ties broken by split order.
  std::vector<size_t> order(fractions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return fractions[a] > fractions[b]; });
  for (size_t i = 0; assigned < n; ++assigned, i = (i + 1) % order.size()) ++sizes[order[i]];

  // A non-empty fraction must never produce an empty split.
  for (size_t i = 0; i < fractions.size(); ++i)
    if (fractions[i] > 0.0 && sizes[i] == 0) {
      for (size_t j = 0; j < sizes.size(); ++j)
        if (sizes[j] > 1) {
          --sizes[j];
          ++sizes[i];
          break;
        }
    }

  SplitManifest m;
  std::vector<std::vector<std::string>*> dst = {&m.train, &m.val, &m.test};
  int64_t pos = 0;
  for (size_t i = 0; i < sizes.size(); ++i) {
    for (int64_t k = 0; k < sizes[i]; ++k) dst[i]->push_back(pool[static_cast<size_t>(pos++)]);
    std::sort(dst[i]->begin(), dst[i]->end());
  }
  return m;
}

SplitManifest subsample_subjects(const SplitManifest& manifest, int64_t n, uint64_t seed) {
  int64_t total = static_cast<int64_t>(manifest.train.size());
  if (n < 1 || n > total)
    throw InvalidInput("subsample: n must be in [1, " + std::to_string(total) + "]");
  std::vector<std::string> pool(manifest.train);
  std::sort(pool.begin(), pool.end());
  Rng rng(seed);
  rng.shuffle(pool);
  SplitManifest out = manifest;
  out.train.assign(pool.begin(), pool.begin() + n);
  std::sort(out.train.begin(), out.train.end());
  return out;
}

void write_split(const std::string& path, const SplitManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open for writing: " + path);
  for (const std::string& s : manifest.train) out << s << "\ttrain\n";
  for (const std::string& s : manifest.val) out << s << "\tval\n";
  for (const std::string& s : manifest.test) out << s << "\ttest\n";
  if (!out) throw InvalidInput("write failed: " + path);
}

SplitManifest read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open split manifest: " + path);
  SplitManifest m;
  std::set<std::string> seen;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw CorruptStore(path + ":" + std::to_string(line_no) +
                         ": expected '<subject>\\t<split>'");
    std::string subject = line.substr(0, tab);
    std::string split = line.substr(tab + 1);
    if (!seen.insert(subject).second)
      throw CorruptStore(path + ":" + std::to_string(line_no) + ": duplicate subject " + subject);
    if (split == "train")
      m.train.push_back(subject);
    else if (split == "val")
      m.val.push_back(subject);
    else if (split == "test")
      m.test.push_back(subject);
    else
      throw CorruptStore(path + ":" + std::to_string(line_no) + ": unknown split " + split);
  }
  return m;
}

std::vector<std::string> subjects_of(const WindowStore& store) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const MultiChannelWindow& w : store.windows)
    if (seen.insert(w.subject_id).second) out.push_back(w.subject_id);
  return out;
}

std::vector<const MultiChannelWindow*> windows_for_subjects(
    const WindowStore& store, const std::vector<std::string>& subjects) {
  std::set<std::string> want(subjects.begin(), subjects.end());
  std::vector<const MultiChannelWindow*> out;
  for (const MultiChannelWindow& w : store.windows)
    if (want.count(w.subject_id)) out.push_back(&w);
  return out;
}

}  // namespace pars
