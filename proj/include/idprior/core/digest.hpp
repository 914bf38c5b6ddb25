#pragma once

#include "idprior/core/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace idprior {

// Incremental SHA-256, hex-encoded on finish().
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t size);
    void update(std::string_view text) { update(text.data(), text.size()); }
    std::string finish();

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Digest over names, shapes and raw bytes of the given parameters, in order.
std::string digest_parameters(std::span<const Parameter* const> params);

}  // namespace idprior
