#include "idprior/backbone/checkpoint.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace idprior::backbone {

namespace {

constexpr char kMagic[8] = {'I', 'D', 'P', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T pod() {
        T v{};
        need(sizeof(T));
        std::memcpy(&v, bytes_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }

    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(at_, n);
        at_ += n;
        return s;
    }

    void doubles(double* dst, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(dst, bytes_.data() + at_, n * sizeof(double));
        at_ += n * sizeof(double);
    }

    bool done() const { return at_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (at_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
    }

    const std::string& bytes_;
    std::size_t at_ = 0;
};

}  // namespace

bool Checkpoint::has(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == name; });
}

const Mat& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has_namespace(const std::string& prefix) const {
    return std::any_of(tensors.begin(), tensors.end(),
                       [&](const auto& t) { return t.first.compare(0, prefix.size(), prefix) == 0; });
}

void Checkpoint::put(const std::string& name, const Mat& value) {
    auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                               [](const auto& t, const std::string& n) { return t.first < n; });
    if (it != tensors.end() && it->first == name) {
        it->second = value;
    } else {
        tensors.emplace(it, name, value);
    }
}

void Checkpoint::put_store(const ParameterStore& store) {
    for (const Parameter* p : store.all()) put(p->name, p->value);
}

bool Checkpoint::operator==(const Checkpoint& other) const {
    if (header != other.header || tensors.size() != other.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& [na, ma] = tensors[i];
        const auto& [nb, mb] = other.tensors[i];
        if (na != nb || ma.rows() != mb.rows() || ma.cols() != mb.cols()) return false;
        if (std::memcmp(ma.data(), mb.data(), sizeof(double) * static_cast<std::size_t>(ma.size())) != 0) return false;
    }
    return true;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    const std::string header = ckpt.header.dump();
    write_pod<std::uint64_t>(out, header.size());
    out += header;
    write_pod<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, m] : ckpt.tensors) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        write_pod<std::int64_t>(out, m.rows());
        write_pod<std::int64_t>(out, m.cols());
        out.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw CheckpointError("not a checkpoint file");
    Checkpoint ckpt;
    const auto header_len = r.pod<std::uint64_t>();
    try {
        ckpt.header = nlohmann::json::parse(r.raw(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    const auto count = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.pod<std::uint32_t>();
        std::string name = r.raw(name_len);
        const auto rows = r.pod<std::int64_t>();
        const auto cols = r.pod<std::int64_t>();
        if (rows < 0 || cols < 0) throw CheckpointError("negative tensor shape");
        Mat m(rows, cols);
        r.doubles(m.data(), static_cast<std::size_t>(rows * cols));
        ckpt.tensors.emplace_back(std::move(name), std::move(m));
    }
    if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace idprior::backbone
