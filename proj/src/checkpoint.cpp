#include "evsnn/checkpoint.hpp"

#include <cstring>

#include "evsnn/errors.hpp"
#include "evsnn/events.hpp"

namespace evsnn {

namespace {

constexpr char kMagic[5] = {'C', 'K', 'P', 'T', '1'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const uint8_t* p) {
  uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::vector<uint8_t> write_checkpoint(const std::vector<std::pair<std::string, Tensor*>>& tensors) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 5);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<uint32_t>(tensor->rank()));
    for (int64_t d : tensor->shape()) put_u32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < tensor->numel(); ++i) put_f64(out, (*tensor)[i]);
  }
  return out;
}

std::vector<NamedTensor> parse_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 5) != 0) {
    throw FormatError("CKPT1: missing or malformed header");
  }
  size_t pos = 5;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) throw FormatError("CKPT1: truncated file");
  };
  need(4);
  const uint32_t count = get_u32(bytes.data() + pos);
  pos += 4;
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    need(4);
    const uint32_t name_len = get_u32(bytes.data() + pos);
    pos += 4;
    need(name_len);
    std::string name(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + name_len));
    pos += name_len;
    need(4);
    const uint32_t rank = get_u32(bytes.data() + pos);
    pos += 4;
    std::vector<int64_t> shape;
    for (uint32_t d = 0; d < rank; ++d) {
      need(4);
      shape.push_back(get_u32(bytes.data() + pos));
      pos += 4;
    }
    const int64_t numel = shape_numel(shape);
    need(static_cast<size_t>(numel) * 8);
    std::vector<double> values(static_cast<size_t>(numel));
    for (int64_t v = 0; v < numel; ++v) {
      values[static_cast<size_t>(v)] = get_f64(bytes.data() + pos);
      pos += 8;
    }
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (pos != bytes.size()) throw FormatError("CKPT1: trailing bytes after last tensor");
  return out;
}

void save_network(Network& net, const std::string& path) {
  write_file(path, write_checkpoint(net.named_tensors()));
}

void load_network(Network& net, const std::string& path) {
  auto loaded = parse_checkpoint(read_file(path));
  auto slots = net.named_tensors();
  if (loaded.size() != slots.size()) {
    throw StateError("checkpoint holds " + std::to_string(loaded.size()) + " tensors but architecture needs " +
                     std::to_string(slots.size()));
  }
  for (size_t i = 0; i < slots.size(); ++i) {
    if (loaded[i].name != slots[i].first) {
      throw StateError("checkpoint tensor '" + loaded[i].name + "' does not match architecture slot '" +
                       slots[i].first + "'");
    }
    if (loaded[i].value.shape() != slots[i].second->shape()) {
      throw StateError("checkpoint tensor '" + loaded[i].name + "' has shape " +
                       shape_str(loaded[i].value.shape()) + " but architecture needs " +
                       shape_str(slots[i].second->shape()));
    }
    *slots[i].second = std::move(loaded[i].value);
  }
}

}  // namespace evsnn
