#include "abpp/container.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace abpp {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("container: truncated while reading " + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

template <typename T>
void put_values(std::ostream& out, const VecX<double>& data) {
  if (data.size() == 0) return;
  std::vector<T> raw(static_cast<size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) raw[static_cast<size_t>(i)] = T(data[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            std::streamsize(raw.size() * sizeof(T)));
}

template <typename T>
VecX<double> get_values(std::istream& in, Index n, const std::string& name) {
  if (n == 0) return VecX<double>(0);
  std::vector<T> raw(static_cast<size_t>(n));
  if (!in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(T))))
    throw std::runtime_error("container: truncated values in entry '" + name + "'");
  VecX<double> out(n);
  for (Index i = 0; i < n; ++i) out[i] = double(raw[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

void write_container(const std::string& path, const std::vector<ContainerEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("container: cannot open '" + path + "' for writing");
  out.write("ABPP", 4);
  put_u32(out, kContainerVersion);
  put_u32(out, std::uint32_t(entries.size()));
  for (const ContainerEntry& e : entries) {
    if (e.data.size() != e.numel())
      throw std::invalid_argument("container: entry '" + e.name + "' holds " +
                                  std::to_string(e.data.size()) + " values for shape " +
                                  shape_str(e.shape));
    put_u32(out, std::uint32_t(e.name.size()));
    out.write(e.name.data(), std::streamsize(e.name.size()));
    put_u32(out, std::uint32_t(e.shape.size()));
    for (Index d : e.shape) put_u32(out, std::uint32_t(d));
    put_u32(out, e.f64 ? 1u : 0u);
    if (e.f64)
      put_values<double>(out, e.data);
    else
      put_values<float>(out, e.data);
  }
  if (!out) throw std::runtime_error("container: short write to '" + path + "'");
}

std::vector<ContainerEntry> read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("container: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "ABPP", 4) != 0)
    throw std::runtime_error("container: '" + path + "' does not start with the ABPP magic");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kContainerVersion)
    throw std::runtime_error("container: '" + path + "' has format version " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kContainerVersion));
  const std::uint32_t count = get_u32(in, "entry count");

  std::vector<ContainerEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ContainerEntry e;
    const std::uint32_t name_len = get_u32(in, "name length");
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len))
      throw std::runtime_error("container: truncated name in entry " + std::to_string(i));
    const std::uint32_t rank = get_u32(in, "rank of '" + e.name + "'");
    for (std::uint32_t r = 0; r < rank; ++r)
      e.shape.push_back(Index(get_u32(in, "dims of '" + e.name + "'")));
    const std::uint32_t dtype = get_u32(in, "dtype of '" + e.name + "'");
    if (dtype > 1)
      throw std::runtime_error("container: entry '" + e.name + "' has unknown dtype tag " +
                               std::to_string(dtype));
    e.f64 = dtype == 1;
    e.data = e.f64 ? get_values<double>(in, e.numel(), e.name)
                   : get_values<float>(in, e.numel(), e.name);
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_params(const std::string& path, const Params& params) {
  std::vector<ContainerEntry> entries;
  entries.reserve(params.size());
  for (const auto& [name, t] : params) {
    ContainerEntry e;
    e.name = name;
    e.shape = t.shape();
    e.f64 = true;
    e.data = t.value();
    entries.push_back(std::move(e));
  }
  write_container(path, entries);
}

void load_params(const std::string& path, Params& params) {
  const std::vector<ContainerEntry> entries = read_container(path);

  std::set<std::string> wanted;
  for (const auto& [name, t] : params) wanted.insert(name);

  std::string missing, extra, reshaped;
  std::vector<const ContainerEntry*> by_param(params.size(), nullptr);
  for (const ContainerEntry& e : entries) {
    bool matched = false;
    for (size_t i = 0; i < params.size(); ++i) {
      if (params[i].first != e.name) continue;
      matched = true;
      if (params[i].second.shape() != e.shape) {
        reshaped += (reshaped.empty() ? "" : ", ") + e.name + " (file " + shape_str(e.shape) +
                    ", model " + shape_str(params[i].second.shape()) + ")";
      } else {
        by_param[i] = &e;
      }
      break;
    }
    if (!matched) extra += (extra.empty() ? "" : ", ") + e.name;
    wanted.erase(e.name);
  }
  for (const std::string& name : wanted) missing += (missing.empty() ? "" : ", ") + name;

  if (!missing.empty() || !extra.empty() || !reshaped.empty()) {
    std::string msg = "checkpoint '" + path + "' does not fit the model:";
    if (!missing.empty()) msg += " missing [" + missing + "]";
    if (!extra.empty()) msg += " unexpected [" + extra + "]";
    if (!reshaped.empty()) msg += " shape mismatch [" + reshaped + "]";
    throw std::runtime_error(msg);
  }

  for (size_t i = 0; i < params.size(); ++i) params[i].second.value() = by_param[i]->data;
}

}  // namespace abpp
