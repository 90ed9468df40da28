#include "ecgid/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ecgid::nn {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'G', 'I', 'D', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint truncated");
  return v;
}

void put_doubles(std::ostream& os, std::span<const double> v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

std::vector<double> get_doubles(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw std::runtime_error("checkpoint tensor length is implausible");
  std::vector<double> v(n);
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw std::runtime_error("checkpoint truncated");
  return v;
}

void put_spec(std::ostream& os, const LayerSpec& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.kind));
  for (int v : {s.in_channels, s.out_channels, s.kernel, s.stride, s.padding, s.pool}) put<std::int32_t>(os, v);
  put<std::uint8_t>(os, s.bias ? 1 : 0);
  put<double>(os, s.dropout_rate);
}

LayerSpec get_spec(std::istream& is) {
  LayerSpec s;
  const auto kind = get<std::uint32_t>(is);
  if (kind > static_cast<std::uint32_t>(LayerKind::softmax)) throw std::runtime_error("checkpoint: bad layer kind");
  s.kind = static_cast<LayerKind>(kind);
  s.in_channels = get<std::int32_t>(is);
  s.out_channels = get<std::int32_t>(is);
  s.kernel = get<std::int32_t>(is);
  s.stride = get<std::int32_t>(is);
  s.padding = get<std::int32_t>(is);
  s.pool = get<std::int32_t>(is);
  s.bias = get<std::uint8_t>(is) != 0;
  s.dropout_rate = get<double>(is);
  return s;
}

void put_history(std::ostream& os, const TrainHistory& h) {
  put<std::int32_t>(os, h.best_epoch);
  put<std::int32_t>(os, h.epochs_run);
  put<std::uint8_t>(os, h.stopped_early ? 1 : 0);
  put_doubles(os, h.train_loss);
  put_doubles(os, h.val_loss);
  put_doubles(os, h.val_accuracy);
}

TrainHistory get_history(std::istream& is) {
  TrainHistory h;
  h.best_epoch = get<std::int32_t>(is);
  h.epochs_run = get<std::int32_t>(is);
  h.stopped_early = get<std::uint8_t>(is) != 0;
  h.train_loss = get_doubles(is);
  h.val_loss = get_doubles(is);
  h.val_accuracy = get_doubles(is);
  return h;
}

}  // namespace

void write_model(std::ostream& os, const Sequential& model) {
  put<std::uint64_t>(os, model.input_shape().channels);
  put<std::uint64_t>(os, model.input_shape().length);
  put<std::uint64_t>(os, model.seed());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i) {
    put_spec(os, model.layer(i).spec());
    put<std::uint8_t>(os, model.trainable(i) ? 1 : 0);
  }
  const auto state = model.snapshot();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(state.size()));
  for (const auto& t : state) put_doubles(os, t);
}

Sequential read_model(std::istream& is) {
  Shape input;
  input.channels = get<std::uint64_t>(is);
  input.length = get<std::uint64_t>(is);
  const auto seed = get<std::uint64_t>(is);
  const auto n = get<std::uint32_t>(is);
  std::vector<LayerSpec> specs;
  std::vector<bool> mask;
  for (std::uint32_t i = 0; i < n; ++i) {
    specs.push_back(get_spec(is));
    mask.push_back(get<std::uint8_t>(is) != 0);
  }
  Sequential model(input, specs, seed);
  for (std::size_t i = 0; i < mask.size(); ++i) model.set_trainable(i, mask[i]);
  const auto count = get<std::uint32_t>(is);
  std::vector<std::vector<double>> state;
  for (std::uint32_t i = 0; i < count; ++i) state.push_back(get_doubles(is));
  model.restore(state);
  return model;
}

void write_checkpoint(std::ostream& os, const ExpertModel& model) {
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::int32_t>(os, model.num_target);
  put<std::int32_t>(os, model.num_aux);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.backbones.size()));
  for (std::size_t k = 0; k < model.backbones.size(); ++k) {
    put<std::int32_t>(os, model.slices[k].begin);
    put<std::int32_t>(os, model.slices[k].length);
    write_model(os, model.backbones[k]);
  }
  write_model(os, model.head);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.histories.size()));
  for (const auto& h : model.histories) put_history(os, h);
}

ExpertModel read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("not an ecgid checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  ExpertModel m;
  m.num_target = get<std::int32_t>(is);
  m.num_aux = get<std::int32_t>(is);
  const auto n = get<std::uint32_t>(is);
  for (std::uint32_t k = 0; k < n; ++k) {
    BeatSlice s;
    s.begin = get<std::int32_t>(is);
    s.length = get<std::int32_t>(is);
    m.slices.push_back(s);
    m.backbones.push_back(read_model(is));
  }
  m.head = read_model(is);
  const auto nh = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nh; ++i) m.histories.push_back(get_history(is));
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ExpertModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(os, model);
}

ExpertModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_checkpoint(is);
}

namespace {

void describe(std::ostringstream& os, const std::string& name, const Sequential& model) {
  os << name << " input " << to_string(model.input_shape()) << '\n';
  Shape s = model.input_shape();
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto spec = model.layer(i).spec();
    s = model.layer(i).output_shape(s);
    os << "  " << i << ' ' << to_string(spec.kind);
    switch (spec.kind) {
      case LayerKind::conv1d:
        os << ' ' << spec.in_channels << "->" << spec.out_channels << " k" << spec.kernel << " s" << spec.stride
           << " p" << spec.padding;
        break;
      case LayerKind::batch_norm: os << ' ' << spec.in_channels; break;
      case LayerKind::max_pool: os << ' ' << spec.pool; break;
      case LayerKind::fully_connected: os << ' ' << spec.in_channels << "->" << spec.out_channels; break;
      case LayerKind::dropout: os << ' ' << spec.dropout_rate; break;
      default: break;
    }
    os << " -> " << to_string(s) << (model.trainable(i) ? "" : " frozen") << '\n';
  }
}

}  // namespace

std::string layer_manifest(const ExpertModel& model) {
  std::ostringstream os;
  for (std::size_t k = 0; k < model.backbones.size(); ++k)
    describe(os,
             "backbone " + std::to_string(k) + " [" + std::to_string(model.slices[k].begin) + ", " +
                 std::to_string(model.slices[k].begin + model.slices[k].length) + ")",
             model.backbones[k]);
  describe(os, "head", model.head);
  os << "classes " << model.num_target << " target, " << model.num_aux << " auxiliary\n";
  return os.str();
}

}  // namespace ecgid::nn
