#include "abi/wf/container.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace abi::wf {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "container payload assumes a little-endian host");

constexpr char magic[4] = {'A', 'B', 'I', 'C'};
constexpr std::uint64_t alignment = 64;

std::uint64_t align_up(std::uint64_t n) { return (n + alignment - 1) / alignment * alignment; }

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

std::int64_t dtype_width(const std::string& dtype) {
    if (dtype == "f32") return 4;
    if (dtype == "f64") return 8;
    return 1;  // json: raw UTF-8 bytes
}

}  // namespace

void ArrayContainer::put_bytes(ContainerEntry meta, std::vector<std::uint8_t> payload) {
    if (meta.name.empty()) throw std::invalid_argument("container: entry name must not be empty");
    if (contains(meta.name)) throw std::invalid_argument("container: duplicate entry '" + meta.name + "'");
    meta.bytes = payload.size();
    entries_.push_back({std::move(meta), std::move(payload)});
}

void ArrayContainer::put_f32(const std::string& name, const num::TensorF& values) {
    if (!values.defined()) throw std::invalid_argument("container: entry '" + name + "' is undefined");
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(values.numel()) * 4);
    std::memcpy(bytes.data(), values.data().data(), bytes.size());
    put_bytes({name, "f32", values.shape(), 0, 0}, std::move(bytes));
}

void ArrayContainer::put_f64(const std::string& name, const num::TensorD& values) {
    if (!values.defined()) throw std::invalid_argument("container: entry '" + name + "' is undefined");
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(values.numel()) * 8);
    std::memcpy(bytes.data(), values.data().data(), bytes.size());
    put_bytes({name, "f64", values.shape(), 0, 0}, std::move(bytes));
}

void ArrayContainer::put_json(const std::string& name, const std::string& serialized) {
    std::vector<std::uint8_t> bytes(serialized.begin(), serialized.end());
    put_bytes({name, "json", {}, 0, 0}, std::move(bytes));
}

bool ArrayContainer::contains(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.meta.name == name) return true;
    return false;
}

std::vector<std::string> ArrayContainer::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.meta.name);
    return out;
}

const ArrayContainer::Stored& ArrayContainer::stored(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.meta.name == name) return e;
    throw std::invalid_argument("container: no entry '" + name + "'");
}

const ContainerEntry& ArrayContainer::entry(const std::string& name) const { return stored(name).meta; }

num::TensorF ArrayContainer::f32(const std::string& name) const {
    const Stored& e = stored(name);
    if (e.meta.dtype != "f32")
        throw std::invalid_argument("container: entry '" + name + "' is " + e.meta.dtype + ", not f32");
    std::vector<float> values(e.payload.size() / 4);
    std::memcpy(values.data(), e.payload.data(), e.payload.size());
    return num::TensorF(e.meta.shape, std::move(values));
}

num::TensorD ArrayContainer::f64(const std::string& name) const {
    const Stored& e = stored(name);
    if (e.meta.dtype != "f64")
        throw std::invalid_argument("container: entry '" + name + "' is " + e.meta.dtype + ", not f64");
    std::vector<double> values(e.payload.size() / 8);
    std::memcpy(values.data(), e.payload.data(), e.payload.size());
    return num::TensorD(e.meta.shape, std::move(values));
}

std::string ArrayContainer::json_text(const std::string& name) const {
    const Stored& e = stored(name);
    if (e.meta.dtype != "json")
        throw std::invalid_argument("container: entry '" + name + "' is " + e.meta.dtype + ", not json");
    return std::string(e.payload.begin(), e.payload.end());
}

void ArrayContainer::save(const std::string& path) const {
    json manifest;
    manifest["entries"] = json::array();
    std::uint64_t cursor = 0;
    std::vector<std::uint64_t> offsets;
    offsets.reserve(entries_.size());
    for (const auto& e : entries_) {
        cursor = align_up(cursor);
        offsets.push_back(cursor);
        json o;
        o["name"] = e.meta.name;
        o["dtype"] = e.meta.dtype;
        o["shape"] = e.meta.shape;
        o["offset"] = cursor;
        o["bytes"] = e.meta.bytes;
        manifest["entries"].push_back(std::move(o));
        cursor += e.meta.bytes;
    }
    const std::string text = manifest.dump();

    std::vector<std::uint8_t> file;
    file.insert(file.end(), magic, magic + 4);
    append_le<std::uint16_t>(file, format_version);
    append_le<std::uint64_t>(file, text.size());
    file.insert(file.end(), text.begin(), text.end());
    const std::uint64_t payload_base = align_up(file.size());
    file.resize(payload_base, 0);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        file.resize(payload_base + offsets[i], 0);
        file.insert(file.end(), entries_[i].payload.begin(), entries_[i].payload.end());
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("container: cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw std::runtime_error("container: short write to '" + path + "'");
}

ArrayContainer ArrayContainer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("container: cannot open '" + path + "'");
    std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (file.size() < 14) throw std::runtime_error("container: truncated file '" + path + "'");
    if (std::memcmp(file.data(), magic, 4) != 0)
        throw std::runtime_error("container: '" + path + "' is not an array container (bad magic)");
    std::uint16_t version = 0;
    std::memcpy(&version, file.data() + 4, 2);
    if (version > format_version)
        throw std::runtime_error("container: '" + path + "' has format version " + std::to_string(version) +
                                 ", this build reads up to " + std::to_string(format_version));
    std::uint64_t manifest_len = 0;
    std::memcpy(&manifest_len, file.data() + 6, 8);
    if (14 + manifest_len > file.size())
        throw std::runtime_error("container: truncated manifest in '" + path + "'");

    json manifest;
    try {
        manifest = json::parse(file.begin() + 14, file.begin() + 14 + static_cast<std::ptrdiff_t>(manifest_len));
    } catch (const json::exception& e) {
        throw std::runtime_error("container: invalid manifest in '" + path + "': " + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("entries") || !manifest["entries"].is_array())
        throw std::runtime_error("container: manifest in '" + path + "' lacks an entry list");

    const std::uint64_t payload_base = align_up(14 + manifest_len);
    ArrayContainer out;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (const json& o : manifest["entries"]) {
        ContainerEntry meta;
        meta.name = o.at("name").get<std::string>();
        meta.dtype = o.at("dtype").get<std::string>();
        meta.shape = o.at("shape").get<num::Shape>();
        meta.offset = o.at("offset").get<std::uint64_t>();
        meta.bytes = o.at("bytes").get<std::uint64_t>();
        if (meta.dtype != "f32" && meta.dtype != "f64" && meta.dtype != "json")
            throw std::runtime_error("container: entry '" + meta.name + "' has unknown dtype " + meta.dtype);
        if (meta.offset % alignment != 0)
            throw std::runtime_error("container: entry '" + meta.name + "' is not 64-byte aligned");
        if (meta.dtype != "json" &&
            meta.bytes != static_cast<std::uint64_t>(num::shape_numel(meta.shape) * dtype_width(meta.dtype)))
            throw std::runtime_error("container: entry '" + meta.name + "' byte length does not match its shape");
        if (payload_base + meta.offset + meta.bytes > file.size())
            throw std::runtime_error("container: truncated payload for entry '" + meta.name + "'");
        spans.emplace_back(meta.offset, meta.bytes);
        std::vector<std::uint8_t> payload(file.begin() + static_cast<std::ptrdiff_t>(payload_base + meta.offset),
                                          file.begin() +
                                              static_cast<std::ptrdiff_t>(payload_base + meta.offset + meta.bytes));
        out.put_bytes(std::move(meta), std::move(payload));
    }

    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].first + spans[i - 1].second)
            throw std::runtime_error("container: overlapping entries in '" + path + "'");
    return out;
}

void put_batch(ArrayContainer& container, const sim::NamedBatch& batch) {
    json info;
    info["batch_size"] = batch.batch_size();
    info["names"] = json::array();
    for (const auto& [name, array] : batch.items()) {
        info["names"].push_back(name);
        if (batch.is_meta(name)) info["meta"].push_back(name);
        const sim::Semantics s = batch.semantics_of(name);
        if (s == sim::Semantics::set) info["semantics"][name] = "set";
        if (s == sim::Semantics::time_series) info["semantics"][name] = "time_series";
        container.put_f32("data/" + name, array.astype(num::DType::f32).to_tensor<float>());
    }
    container.put_json("batch", info.dump());
}

sim::NamedBatch get_batch(const ArrayContainer& container) {
    const json info = json::parse(container.json_text("batch"));
    sim::NamedBatch batch(info.at("batch_size").get<std::int64_t>());
    std::set<std::string> meta;
    if (info.contains("meta"))
        for (const auto& n : info["meta"]) meta.insert(n.get<std::string>());
    for (const auto& n : info.at("names")) {
        const std::string name = n.get<std::string>();
        const num::TensorF values = container.f32("data/" + name);
        batch.set(name,
                  num::Array::from_values(values.shape(),
                                          std::vector<double>(values.data().begin(), values.data().end())),
                  meta.count(name) > 0);
        if (info.contains("semantics") && info["semantics"].contains(name))
            batch.set_semantics(name, info["semantics"][name] == "set" ? sim::Semantics::set
                                                                       : sim::Semantics::time_series);
    }
    return batch;
}

}  // namespace abi::wf
