#include "karl/package.hpp"

#include <cstdio>
#include <cstring>

#include <openssl/evp.h>

namespace karl {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

constexpr std::string_view kMagic{"KPKG\x01", 5};

void put_le(Bytes& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::string_view s;
  std::size_t pos = 0;

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view bytes(std::uint64_t n) {
    need(n);
    auto out = s.substr(pos, n);
    pos += n;
    return out;
  }
  void need(std::uint64_t n) {
    if (s.size() - pos < n) throw Error(Errc::TransferFailure, "truncated package archive");
  }
};

}  // namespace

Bytes pack(const PackageContents& contents) {
  ModuleManifest m = contents.manifest;
  m.package = {};
  Bytes out(kMagic);
  put_le(out, contents.files.size() + 1, 4);
  auto add = [&](const std::string& name, const Bytes& data) {
    put_le(out, name.size(), 4);
    out += name;
    put_le(out, data.size(), 8);
    out += data;
  };
  add("manifest.json", to_json(m).dump());
  for (const auto& [name, data] : contents.files) {
    if (name == "manifest.json") continue;
    add(name, data);
  }
  return out;
}

PackageContents unpack(std::string_view blob) {
  if (blob.substr(0, kMagic.size()) != kMagic)
    throw Error(Errc::TransferFailure, "not a module package");
  Reader r{blob, kMagic.size()};
  auto count = r.le(4);
  PackageContents out;
  bool have_manifest = false;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.bytes(r.le(4)));
    Bytes data(r.bytes(r.le(8)));
    if (name == "manifest.json") {
      try {
        out.manifest = manifest_from_json(Json::parse(data));
      } catch (const std::exception& e) {
        throw Error(Errc::TransferFailure, std::string("bad package manifest: ") + e.what());
      }
      have_manifest = true;
    } else {
      out.files.emplace(std::move(name), std::move(data));
    }
  }
  if (!have_manifest) throw Error(Errc::TransferFailure, "package has no manifest.json");
  return out;
}

Package make_package(ModuleManifest manifest, std::map<std::string, Bytes> files) {
  PackageContents c{manifest, std::move(files)};
  auto blob = std::make_shared<const Bytes>(pack(c));
  manifest.package.hash = sha256_hex(*blob);
  manifest.package.size_bytes = blob->size();
  return {std::move(manifest), std::move(blob)};
}

void PackageCatalog::add(Package package) {
  std::lock_guard lock(mutex_);
  by_hash_[package.manifest.package.hash] = package.blob;
  by_name_[package.manifest.name] = std::move(package.manifest);
}

std::optional<ModuleManifest> PackageCatalog::manifest(std::string_view name) const {
  std::lock_guard lock(mutex_);
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::shared_ptr<const Bytes> PackageCatalog::blob(std::string_view hash) const {
  std::lock_guard lock(mutex_);
  auto it = by_hash_.find(hash);
  return it == by_hash_.end() ? nullptr : it->second;
}

ManifestResolver PackageCatalog::resolver() const {
  return [this](std::string_view name) { return manifest(name); };
}

}  // namespace karl
