#include "pars/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pars/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float32 and are written raw");

namespace pars::nn {

namespace fs = std::filesystem;

namespace {

std::string shape_text(const std::vector<int64_t>& shape) {
  std::string out;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<int64_t> parse_shape(const std::string& text) {
  std::vector<int64_t> shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      shape.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw CorruptStore("checkpoint manifest has a malformed shape: " + text);
    }
  }
  if (shape.empty()) throw CorruptStore("checkpoint manifest has an empty shape");
  return shape;
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::vector<ManifestEntry> read_manifest_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptStore("cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int64_t expected_offset = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string dtype, shape, offset, nbytes;
    if (!std::getline(ss, e.name, '\t') || !std::getline(ss, dtype, '\t') ||
        !std::getline(ss, shape, '\t') || !std::getline(ss, offset, '\t') ||
        !std::getline(ss, nbytes, '\t'))
      throw CorruptStore("malformed manifest row in " + path.string() + ": " + line);
    if (dtype != "f32") throw CorruptStore("unsupported dtype '" + dtype + "' in " + path.string());
    e.shape = parse_shape(shape);
    try {
      e.offset = std::stoll(offset);
      e.nbytes = std::stoll(nbytes);
    } catch (const std::exception&) {
      throw CorruptStore("malformed manifest numbers in " + path.string() + ": " + line);
    }
    if (e.offset != expected_offset)
      throw CorruptStore("manifest offsets are not contiguous in " + path.string());
    if (e.nbytes != 4 * shape_numel(e.shape))
      throw CorruptStore("manifest byte count disagrees with shape for " + e.name);
    expected_offset = e.offset + e.nbytes;
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<char> read_blob(const fs::path& path, int64_t expected_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptStore("cannot open " + path.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (static_cast<int64_t>(blob.size()) != expected_bytes)
    throw CorruptStore(path.string() + " holds " + std::to_string(blob.size()) +
                       " bytes, manifest expects " + std::to_string(expected_bytes));
  return blob;
}

void write_manifest_and_blob(const fs::path& manifest_path, const fs::path& blob_path,
                             const std::vector<std::pair<std::string, const std::vector<float>*>>& items,
                             const std::vector<std::vector<int64_t>>& shapes) {
  std::ofstream manifest(manifest_path);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!manifest || !blob) throw CorruptStore("cannot write checkpoint files");
  int64_t offset = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& [name, values] = items[i];
    const int64_t nbytes = static_cast<int64_t>(values->size()) * 4;
    manifest << name << '\t' << "f32" << '\t' << shape_text(shapes[i]) << '\t' << offset << '\t'
             << nbytes << '\n';
    blob.write(reinterpret_cast<const char*>(values->data()), nbytes);
    offset += nbytes;
  }
  if (!manifest || !blob) throw CorruptStore("failed writing checkpoint files");
}

}  // namespace

void save_checkpoint(const std::string& dir, const ParameterStore& store,
                     const CheckpointState& state,
                     const std::map<std::string, std::string>& model_info) {
  fs::create_directories(dir);
  const fs::path root(dir);

  std::vector<std::pair<std::string, const std::vector<float>*>> params;
  std::vector<std::vector<int64_t>> param_shapes;
  std::vector<std::pair<std::string, const std::vector<float>*>> moments;
  std::vector<std::vector<int64_t>> moment_shapes;
  for (const std::string& name : store.names()) {
    const ParamEntry& e = store.at(name);
    params.emplace_back(name, &e.value);
    param_shapes.push_back(e.shape);
    if (!e.adam_m.empty()) {
      moments.emplace_back(name + ".adam_m", &e.adam_m);
      moment_shapes.push_back(e.shape);
      moments.emplace_back(name + ".adam_v", &e.adam_v);
      moment_shapes.push_back(e.shape);
    }
  }
  write_manifest_and_blob(root / "manifest.tsv", root / "params.bin", params, param_shapes);
  write_manifest_and_blob(root / "optim.tsv", root / "optim.bin", moments, moment_shapes);

  std::ofstream st(root / "state.txt");
  st << "epoch=" << state.epoch << '\n'
     << "global_step=" << state.global_step << '\n'
     << "adam_steps=" << state.adam_steps << '\n'
     << "rng=" << state.rng_text << '\n';
  if (!st) throw CorruptStore("failed writing " + (root / "state.txt").string());

  std::ofstream mi(root / "model.txt");
  for (const auto& [k, v] : model_info) mi << k << '=' << v << '\n';
  if (!mi) throw CorruptStore("failed writing " + (root / "model.txt").string());
}

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  return read_manifest_file(fs::path(dir) / "manifest.tsv");
}

std::map<std::string, std::string> read_model_info(const std::string& dir) {
  const fs::path path = fs::path(dir) / "model.txt";
  std::ifstream in(path);
  if (!in) throw CorruptStore("cannot open " + path.string());
  std::map<std::string, std::string> info;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw CorruptStore("malformed line in " + path.string());
    info[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return info;
}

CheckpointState read_state(const std::string& dir) {
  const fs::path path = fs::path(dir) / "state.txt";
  std::ifstream in(path);
  if (!in) throw CorruptStore("cannot open " + path.string());
  CheckpointState state;
  std::string line;
  bool saw_epoch = false, saw_step = false, saw_adam = false, saw_rng = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw CorruptStore("malformed line in " + path.string());
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "epoch") {
        state.epoch = std::stoll(value);
        saw_epoch = true;
      } else if (key == "global_step") {
        state.global_step = std::stoll(value);
        saw_step = true;
      } else if (key == "adam_steps") {
        state.adam_steps = std::stoll(value);
        saw_adam = true;
      } else if (key == "rng") {
        state.rng_text = value;
        saw_rng = true;
      }
    } catch (const std::exception&) {
      throw CorruptStore("malformed value in " + path.string() + ": " + line);
    }
  }
  if (!saw_epoch || !saw_step || !saw_adam || !saw_rng)
    throw CorruptStore(path.string() + " is missing required fields");
  return state;
}

bool checkpoint_exists(const std::string& dir) {
  const fs::path root(dir);
  return fs::exists(root / "manifest.tsv") && fs::exists(root / "params.bin") &&
         fs::exists(root / "state.txt");
}

void load_checkpoint(const std::string& dir, ParameterStore& store, CheckpointState* state) {
  const fs::path root(dir);
  const std::vector<ManifestEntry> manifest = read_manifest(dir);

  // Compare key sets and shapes before touching any value.
  std::vector<std::string> problems;
  std::map<std::string, const ManifestEntry*> by_name;
  for (const ManifestEntry& e : manifest) by_name[e.name] = &e;
  for (const std::string& name : store.names()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      problems.push_back("missing from checkpoint: " + name);
    } else if (it->second->shape != store.at(name).shape) {
      problems.push_back("shape mismatch for " + name + " (checkpoint " +
                         shape_text(it->second->shape) + ", model " +
                         shape_text(store.at(name).shape) + ")");
    }
  }
  for (const ManifestEntry& e : manifest)
    if (!store.contains(e.name)) problems.push_back("not in model: " + e.name);
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw ManifestMismatch(msg);
  }

  int64_t total = 0;
  for (const ManifestEntry& e : manifest) total += e.nbytes;
  const std::vector<char> blob = read_blob(root / "params.bin", total);
  for (const ManifestEntry& e : manifest) {
    ParamEntry& p = store.at(e.name);
    std::memcpy(p.value.data(), blob.data() + e.offset, static_cast<size_t>(e.nbytes));
  }

  // Optimizer moments, keyed <param>.adam_m / <param>.adam_v.
  const std::vector<ManifestEntry> optim = read_manifest_file(root / "optim.tsv");
  int64_t optim_total = 0;
  for (const ManifestEntry& e : optim) optim_total += e.nbytes;
  const std::vector<char> optim_blob = read_blob(root / "optim.bin", optim_total);
  for (const ManifestEntry& e : optim) {
    const size_t dot = e.name.rfind('.');
    const std::string param = e.name.substr(0, dot);
    const std::string which = dot == std::string::npos ? "" : e.name.substr(dot + 1);
    if (!store.contains(param) || (which != "adam_m" && which != "adam_v"))
      throw ManifestMismatch("optimizer state for unknown parameter: " + e.name);
    ParamEntry& p = store.at(param);
    if (e.shape != p.shape) throw ManifestMismatch("optimizer state shape mismatch for " + e.name);
    std::vector<float>& dst = which == "adam_m" ? p.adam_m : p.adam_v;
    dst.resize(p.value.size());
    std::memcpy(dst.data(), optim_blob.data() + e.offset, static_cast<size_t>(e.nbytes));
  }

  if (state != nullptr) *state = read_state(dir);
}

void load_params_with_prefix(const std::string& dir, ParameterStore& store,
                             const std::string& prefix) {
  const fs::path root(dir);
  const std::vector<ManifestEntry> manifest = read_manifest(dir);

  std::vector<std::string> problems;
  std::map<std::string, const ManifestEntry*> by_name;
  for (const ManifestEntry& e : manifest)
    if (e.name.rfind(prefix, 0) == 0) by_name[e.name] = &e;
  for (const std::string& name : store.names_with_prefix(prefix)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      problems.push_back("missing from checkpoint: " + name);
    } else if (it->second->shape != store.at(name).shape) {
      problems.push_back("shape mismatch for " + name);
    }
  }
  for (const auto& kv : by_name)
    if (!store.contains(kv.first)) problems.push_back("not in model: " + kv.first);
  if (by_name.empty()) problems.push_back("checkpoint has no parameters under '" + prefix + "'");
  if (!problems.empty()) {
    std::string msg = "warm start failed for prefix '" + prefix + "':";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw ManifestMismatch(msg);
  }

  int64_t total = 0;
  for (const ManifestEntry& e : manifest) total += e.nbytes;
  const std::vector<char> blob = read_blob(root / "params.bin", total);
  for (const auto& [name, entry] : by_name) {
    ParamEntry& p = store.at(name);
    std::memcpy(p.value.data(), blob.data() + entry->offset, static_cast<size_t>(entry->nbytes));
  }
}

}  // namespace pars::nn
