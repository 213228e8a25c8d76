#include "mscl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mscl/error.hpp"

namespace mscl {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'C', 'L'};

template <typename U>
void put_le(std::string &out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char *p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

struct Entry {
  std::string name;
  std::span<const double> data;
  Shape shape;
};

std::size_t dtype_size(const std::string &dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw SchemaError("unknown tensor dtype '" + dtype + "'");
}

void write_container(const std::filesystem::path &path, nlohmann::json header, const std::vector<Entry> &entries,
                     const std::string &dtype) {
  const std::size_t width = dtype_size(dtype);
  std::string payload;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto &e : entries) {
    dir.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", payload.size()}, {"dtype", dtype}});
    for (double v : e.data) {
      if (width == 4) put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else put_le(payload, std::bit_cast<std::uint64_t>(v));
    }
  }
  header["tensors"] = std::move(dir);
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

struct Container {
  nlohmann::json header;
  std::string payload;
};

Container read_container(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path.string() + " is not an MSCL checkpoint");
  const auto version = get_le<std::uint32_t>(p + 4);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(p + 8);
  if (len > bytes.size() - 16) throw FormatError("checkpoint header overruns the file");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  c.payload = bytes.substr(16 + len);
  return c;
}

// Copies every named tensor into `targets`, which must match in name order
// and shape.
void fill_tensors(const Container &c, const std::vector<std::pair<std::string, std::span<double>>> &targets,
                  const std::vector<Shape> &shapes) {
  std::map<std::string, const nlohmann::json *> by_name;
  const auto &dir = c.header.at("tensors");
  for (const auto &e : dir) by_name[e.at("name").get<std::string>()] = &e;
  if (by_name.size() != targets.size())
    throw CompatibilityError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, expected " +
                             std::to_string(targets.size()));
  const auto *base = reinterpret_cast<const unsigned char *>(c.payload.data());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto &[name, dst] = targets[i];
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CompatibilityError("checkpoint lacks tensor " + name);
    const auto &e = *it->second;
    if (e.at("shape").get<Shape>() != shapes[i])
      throw CompatibilityError("tensor " + name + " has shape " + shape_str(e.at("shape").get<Shape>()) +
                               ", model expects " + shape_str(shapes[i]));
    const std::size_t width = dtype_size(e.at("dtype").get<std::string>());
    const auto offset = e.at("offset").get<std::size_t>();
    if (offset + dst.size() * width > c.payload.size()) throw FormatError("tensor " + name + " overruns the payload");
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const unsigned char *q = base + offset + k * width;
      dst[k] = width == 4 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(q)))
                          : std::bit_cast<double>(get_le<std::uint64_t>(q));
    }
  }
}

nlohmann::json common_header(const char *kind, const TrainState &state, const Vocabulary &vocab,
                             const RunConfig &config) {
  return {{"kind", kind},
          {"model", state.model.config().to_json()},
          {"vocab", vocab.to_json()},
          {"d_proj", config.d_proj},
          {"seed", config.seed},
          {"epoch", state.epoch},
          {"best_val_bleu4", state.best_val_bleu4}};
}

std::vector<Entry> parameter_entries(const TrainState &state) {
  std::vector<Entry> out;
  for (const auto &[name, t] : trainable_parameters(state)) out.push_back({name, t.data(), t.shape()});
  return out;
}

void require_kind(const Container &c, const std::string &kind, const std::filesystem::path &path) {
  if (c.header.value("kind", "") != kind)
    throw FormatError(path.string() + " is not a " + kind + " file");
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path, const TrainState &state, const Vocabulary &vocab,
                     const RunConfig &config) {
  write_container(path, common_header("checkpoint", state, vocab, config), parameter_entries(state), "f32");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path &path) {
  const Container c = read_container(path);
  require_kind(c, "checkpoint", path);
  try {
    const ModelConfig mc = ModelConfig::from_json(c.header.at("model"));
    LoadedCheckpoint out{MsclModel(mc, 0), ContrastiveHead(mc.d, c.header.at("d_proj").get<std::size_t>(), 0),
                         Vocabulary::from_json(c.header.at("vocab")), c.header};
    if (out.vocab.size() != mc.vocab_size) throw CompatibilityError("checkpoint vocabulary disagrees with its model");
    TrainState view{out.model, out.head, {}, 0, 0.0};
    std::vector<std::pair<std::string, std::span<double>>> targets;
    std::vector<Shape> shapes;
    for (auto &[name, t] : trainable_parameters(view)) {
      targets.emplace_back(name, t.mutable_data());
      shapes.push_back(t.shape());
    }
    fill_tensors(c, targets, shapes);
    return out;
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
}

void check_compatible(const LoadedCheckpoint &ckpt, const Vocabulary &vocab, const ModelConfig &model) {
  if (ckpt.vocab.to_json() != vocab.to_json())
    throw CompatibilityError("vocabulary differs from the one the checkpoint was trained with");
  ModelConfig want = model;
  want.vocab_size = vocab.size();
  if (!(ckpt.model.config() == want))
    throw CompatibilityError("model configuration differs from the checkpoint: " + ckpt.model.config().to_json().dump() +
                             " vs " + want.to_json().dump());
}

void save_resume(const std::filesystem::path &path, const TrainState &state, const Vocabulary &vocab,
                 const RunConfig &config) {
  auto header = common_header("resume", state, vocab, config);
  header["adam_step"] = state.optimizer.step;
  auto entries = parameter_entries(state);
  const auto named = trainable_parameters(state);
  if (!state.optimizer.m.empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      entries.push_back({"adam.m." + named[i].first, state.optimizer.m[i], named[i].second.shape()});
      entries.push_back({"adam.v." + named[i].first, state.optimizer.v[i], named[i].second.shape()});
    }
  }
  write_container(path, std::move(header), entries, "f64");
}

TrainState load_resume(const std::filesystem::path &path, const Vocabulary &vocab, const RunConfig &config) {
  const Container c = read_container(path);
  require_kind(c, "resume", path);
  TrainState state = init_train_state(config, vocab.size());
  try {
    if (Vocabulary::from_json(c.header.at("vocab")).to_json() != vocab.to_json())
      throw CompatibilityError("resume file was written with a different vocabulary");
    if (!(ModelConfig::from_json(c.header.at("model")) == state.model.config()))
      throw CompatibilityError("resume file was written with a different model configuration");
    if (c.header.at("d_proj").get<std::size_t>() != config.d_proj)
      throw CompatibilityError("resume file was written with a different train.d_proj");
    const auto named = trainable_parameters(state);
    const auto step = c.header.at("adam_step").get<std::int64_t>();
    std::vector<std::pair<std::string, std::span<double>>> targets;
    std::vector<Shape> shapes;
    for (const auto &[name, t] : named) {
      Tensor handle = t;
      targets.emplace_back(name, handle.mutable_data());
      shapes.push_back(t.shape());
    }
    if (step > 0) {
      state.optimizer.m.resize(named.size());
      state.optimizer.v.resize(named.size());
      for (std::size_t i = 0; i < named.size(); ++i) {
        state.optimizer.m[i].assign(named[i].second.numel(), 0.0);
        state.optimizer.v[i].assign(named[i].second.numel(), 0.0);
      }
      for (std::size_t i = 0; i < named.size(); ++i) {
        targets.emplace_back("adam.m." + named[i].first, state.optimizer.m[i]);
        shapes.push_back(named[i].second.shape());
        targets.emplace_back("adam.v." + named[i].first, state.optimizer.v[i]);
        shapes.push_back(named[i].second.shape());
      }
    }
    fill_tensors(c, targets, shapes);
    state.optimizer.step = step;
    state.epoch = c.header.at("epoch").get<std::size_t>();
    state.best_val_bleu4 = c.header.at("best_val_bleu4").get<double>();
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("resume header: ") + e.what());
  }
  return state;
}

}  // namespace mscl
