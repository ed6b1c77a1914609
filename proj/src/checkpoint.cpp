#include "trefree/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "trefree/errors.hpp"

namespace trefree::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'T', 'R', 'F', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw InvalidArgument("truncated checkpoint");
  return v;
}

}  // namespace

void save_binary(const PolicyNet& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  const NetShape s = net.shape();
  write_u32(os, static_cast<std::uint32_t>(s.obs_dim));
  write_u32(os, static_cast<std::uint32_t>(s.act_dim));
  write_u32(os, static_cast<std::uint32_t>(s.hidden));
  write_u32(os, static_cast<std::uint32_t>(kTensorCount));
  for (const auto& t : net.layout().tensors()) {
    write_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rows));
    write_u32(os, static_cast<std::uint32_t>(t.cols));
    os.write(reinterpret_cast<const char*>(net.values().data() + t.offset),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw InvalidArgument("failed writing checkpoint " + path.string());
}

PolicyNet load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InvalidArgument("not a trefree binary checkpoint: " + path.string());
  }
  NetShape shape;
  shape.obs_dim = static_cast<int>(read_u32(is));
  shape.act_dim = static_cast<int>(read_u32(is));
  shape.hidden = static_cast<int>(read_u32(is));
  PolicyNet net(shape);
  if (read_u32(is) != kTensorCount) throw InvalidArgument("unexpected tensor count in checkpoint");
  for (const auto& t : net.layout().tensors()) {
    const std::uint32_t len = read_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = static_cast<int>(read_u32(is));
    const auto cols = static_cast<int>(read_u32(is));
    if (!is || name != t.name || rows != t.rows || cols != t.cols) {
      throw InvalidArgument("checkpoint tensor mismatch at '" + std::string(t.name) + "'");
    }
    is.read(reinterpret_cast<char*>(net.values().data() + t.offset),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw InvalidArgument("truncated checkpoint data for '" + name + "'");
  }
  return net;
}

nlohmann::json to_json(const PolicyNet& net) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : net.layout().tensors()) {
    std::vector<double> data(net.values().data() + t.offset,
                             net.values().data() + t.offset + t.size());
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"data", data}});
  }
  const NetShape s = net.shape();
  return {{"format", "trefree-checkpoint"},
          {"shape", {{"obs_dim", s.obs_dim}, {"act_dim", s.act_dim}, {"hidden", s.hidden}}},
          {"tensors", std::move(tensors)}};
}

PolicyNet net_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "trefree-checkpoint") throw InvalidArgument("not a trefree checkpoint");
    const auto& s = j.at("shape");
    PolicyNet net(NetShape{s.at("obs_dim").get<int>(), s.at("act_dim").get<int>(),
                           s.at("hidden").get<int>()});
    const auto& tensors = j.at("tensors");
    if (tensors.size() != static_cast<std::size_t>(kTensorCount)) {
      throw InvalidArgument("unexpected tensor count in checkpoint");
    }
    std::size_t k = 0;
    for (const auto& t : net.layout().tensors()) {
      const auto& jt = tensors[k++];
      const auto data = jt.at("data").get<std::vector<double>>();
      if (jt.at("name").get<std::string>() != t.name || jt.at("rows").get<int>() != t.rows ||
          jt.at("cols").get<int>() != t.cols || data.size() != t.size()) {
        throw InvalidArgument("checkpoint tensor mismatch at '" + std::string(t.name) + "'");
      }
      std::copy(data.begin(), data.end(), net.values().data() + t.offset);
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed checkpoint JSON: ") + e.what());
  }
}

}  // namespace trefree::nn
