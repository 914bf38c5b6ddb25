#include "idprior/data/generator.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace idprior::data {

namespace {

constexpr int kSide = 32;
constexpr int kChannels = 3;
constexpr float kSensorNoise = 0.02f;

// Train and test families draw artifact strengths from disjoint ranges and
// perturb different attribute subsets.
using Family = ForgeryFamily;

struct FamilyInfo {
    const char* method;
    const char* slug;
    ForgeryType type;
    Split split;
};

FamilyInfo info(Family f) {
    switch (f) {
        case Family::simswap: return {"SimSwap", "simswap", ForgeryType::deepfake, Split::train};
        case Family::photomaker: return {"PhotoMaker", "photomaker", ForgeryType::aigc, Split::train};
        case Family::roop: return {"Roop", "roop", ForgeryType::deepfake, Split::test};
        case Family::storymaker: return {"StoryMaker", "storymaker", ForgeryType::aigc, Split::test};
        case Family::pulid: return {"PuLID", "pulid", ForgeryType::aigc, Split::test};
        case Family::none: break;
    }
    return {"", "", ForgeryType::none, Split::train};
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
float uniform_float(Rng& rng, float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); }
bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

template <std::size_t N>
std::array<int, N> distinct_draw(Rng& rng, int range) {
    std::vector<int> pool(static_cast<std::size_t>(range));
    std::iota(pool.begin(), pool.end(), 0);
    std::array<int, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        const int j = uniform_int(rng, static_cast<int>(i), range - 1);
        std::swap(pool[i], pool[static_cast<std::size_t>(j)]);
        out[i] = pool[i];
    }
    std::sort(out.begin(), out.end());
    return out;
}

int draw_other(Rng& rng, int range, int current) {
    int v = uniform_int(rng, 0, range - 2);
    return v >= current ? v + 1 : v;
}

struct Geometry {
    float cx, cy, rx, ry;
    bool square;

    bool inside(float px, float py) const {
        const float u = (px - cx) / rx;
        const float v = (py - cy) / ry;
        if (square) return u * u * u * u + v * v * v * v <= 1.0f;
        return u * u + v * v <= 1.0f;
    }
};

void set(Raster& img, int y, int x, Rgb c) {
    if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
    img.at(y, x, 0) = c.r;
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
}

Rgb mix(Rgb a, Rgb b, float t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

Rgb scene_pixel(int scene, int y, int x) {
    switch (scene) {
        case 0: return {0.85f, 0.85f, 0.88f};
        case 1: return (x / 2) % 2 ? Rgb{0.60f, 0.66f, 0.74f} : Rgb{0.48f, 0.54f, 0.62f};
        case 2: return y < 12 ? Rgb{0.40f, 0.70f, 0.95f} : Rgb{0.95f, 0.85f, 0.55f};
        case 3: {
            const float d = std::sqrt(static_cast<float>((x - 16) * (x - 16) + (y - 10) * (y - 10)));
            const float glow = std::max(0.0f, 1.0f - d / 14.0f) * 0.5f;
            return {0.22f + glow, 0.05f + glow, 0.28f + glow};
        }
        case 4: return (y / 3) % 2 ? Rgb{0.45f, 0.45f, 0.45f} : Rgb{0.33f, 0.33f, 0.35f};
        case 5: return ((x / 4) + (y / 4)) % 2 ? Rgb{0.12f, 0.42f, 0.15f} : Rgb{0.22f, 0.56f, 0.22f};
        case 6: return y < 10 ? Rgb{0.30f, 0.30f, 0.62f} : Rgb{0.20f, 0.64f, 0.22f};
        default: return (x / 3) % 2 ? Rgb{0.52f, 0.32f, 0.16f} : Rgb{0.34f, 0.20f, 0.10f};
    }
}

Geometry head_geometry(int shape, int dx, int dy) {
    const float cx = 16.0f + static_cast<float>(dx);
    const float cy = 12.0f + static_cast<float>(dy);
    switch (shape) {
        case 0: return {cx, cy, 6.5f, 6.5f, false};
        case 1: return {cx, cy, 5.5f, 7.5f, false};
        case 2: return {cx, cy, 4.5f, 8.5f, false};
        default: return {cx, cy, 6.0f, 6.5f, true};
    }
}

struct Canvas {
    Raster image;
    std::vector<std::uint8_t> head;  // 1 inside the face region
};

Canvas draw(const RenderedAttributes& a, int dx, int dy) {
    Canvas cv{Raster(kSide, kSide, kChannels), std::vector<std::uint8_t>(kSide * kSide, 0)};
    Raster& img = cv.image;
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) set(img, y, x, scene_pixel(a.scene, y, x));

    const Geometry g = head_geometry(a.shape, dx, dy);
    const Rgb skin = kSkinColors[static_cast<std::size_t>(a.skin)];
    const Rgb hair = kHairColors[static_cast<std::size_t>(a.hair)];
    const Rgb cloth = kClothingColors[static_cast<std::size_t>(a.clothing)];
    const int icx = static_cast<int>(std::lround(g.cx));
    const int icy = static_cast<int>(std::lround(g.cy));

    // torso and neck
    const int shoulder = 22 + dy;
    for (int y = shoulder; y < kSide; ++y) {
        const float half = 6.0f + static_cast<float>(y - shoulder) * 0.8f;
        for (int x = 0; x < kSide; ++x)
            if (std::abs(static_cast<float>(x) + 0.5f - g.cx) <= half) set(img, y, x, cloth);
    }
    switch (a.clothing) {
        case 0:  // suit collar
            for (int y = shoulder; y < shoulder + 4; ++y) set(img, y, icx, {0.95f, 0.95f, 0.95f});
            break;
        case 3:  // jacket zip
            for (int y = shoulder + 1; y < kSide; ++y) set(img, y, icx, {0.15f, 0.10f, 0.05f});
            break;
        case 4:  // badge
            set(img, shoulder + 3, icx + 3, {0.95f, 0.85f, 0.10f});
            break;
        case 2:  // waist band
            for (int x = icx - 8; x <= icx + 8; ++x) set(img, shoulder + 6, x, {0.55f, 0.05f, 0.20f});
            break;
        case 5:  // hood outline
            for (int x = icx - 6; x <= icx + 6; ++x) set(img, shoulder, x, {0.40f, 0.42f, 0.62f});
            break;
        default: break;
    }
    for (int y = static_cast<int>(g.cy + g.ry) - 1; y < shoulder; ++y)
        for (int x = icx - 2; x <= icx + 1; ++x) set(img, y, x, skin);

    // hair volume behind the head
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
            const float px = static_cast<float>(x) + 0.5f;
            const float py = static_cast<float>(y) + 0.5f;
            const Geometry outer{g.cx, g.cy - 0.5f, g.rx + 1.2f, g.ry + 1.0f, g.square};
            if (outer.inside(px, py) && py < g.cy - 0.2f * g.ry) set(img, y, x, hair);
        }
    // face
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
            const float px = static_cast<float>(x) + 0.5f;
            const float py = static_cast<float>(y) + 0.5f;
            if (!g.inside(px, py)) continue;
            cv.head[static_cast<std::size_t>(y * kSide + x)] = 1;
            Rgb c = skin;
            if (py < g.cy - 0.35f * g.ry) c = hair;
            else if (a.beard == 1 && py > g.cy + 0.3f * g.ry) c = mix(skin, {0.22f, 0.14f, 0.08f}, 0.8f);
            set(img, y, x, c);
        }
    // eyes, eyewear, mouth
    const Rgb dark{0.08f, 0.08f, 0.10f};
    if (a.eyewear == 2) {
        for (int y = icy - 2; y <= icy - 1; ++y)
            for (int x = icx - 4; x <= icx + 3; ++x) set(img, y, x, {0.04f, 0.04f, 0.05f});
    } else {
        set(img, icy - 1, icx - 3, dark);
        set(img, icy - 1, icx + 2, dark);
        if (a.eyewear == 1) {
            const Rgb frame{0.30f, 0.30f, 0.32f};
            for (int x = icx - 5; x <= icx + 4; ++x) {
                if (x == icx - 1 || x == icx) continue;
                set(img, icy - 2, x, frame);
                set(img, icy, x, frame);
            }
            set(img, icy - 1, icx - 5, frame);
            set(img, icy - 1, icx - 1, frame);
            set(img, icy - 1, icx, frame);
            set(img, icy - 1, icx + 4, frame);
        }
    }
    const int mouth_y = static_cast<int>(std::lround(g.cy + 0.55f * g.ry));
    for (int x = icx - 1; x <= icx + 1; ++x) set(img, mouth_y, x, {0.62f, 0.18f, 0.20f});
    return cv;
}

void apply_gain(Raster& img, float gain) {
    for (float& v : img.pixels) v *= gain;
}

void add_sensor_noise(Raster& img, Rng& rng) {
    std::normal_distribution<float> n(0.0f, kSensorNoise);
    for (float& v : img.pixels) v += n(rng);
}

void clamp01(Raster& img) {
    for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

Raster box_blur(const Raster& img) {
    Raster out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float s = 0.0f;
                int n = 0;
                for (int yy = std::max(0, y - 1); yy <= std::min(img.height - 1, y + 1); ++yy)
                    for (int xx = std::max(0, x - 1); xx <= std::min(img.width - 1, x + 1); ++xx) {
                        s += img.at(yy, xx, c);
                        ++n;
                    }
                out.at(y, x, c) = s / static_cast<float>(n);
            }
    return out;
}

std::vector<std::uint8_t> seam_of(const std::vector<std::uint8_t>& head) {
    std::vector<std::uint8_t> seam(head.size(), 0);
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
            const auto here = head[static_cast<std::size_t>(y * kSide + x)];
            for (int yy = y - 1; yy <= y + 1; ++yy)
                for (int xx = x - 1; xx <= x + 1; ++xx) {
                    if (yy < 0 || yy >= kSide || xx < 0 || xx >= kSide) continue;
                    if (head[static_cast<std::size_t>(yy * kSide + xx)] != here) seam[static_cast<std::size_t>(y * kSide + x)] = 1;
                }
        }
    return seam;
}

struct Drawn {
    Raster image;
    RenderedAttributes attributes;
};

Drawn render_real(const SyntheticIdentitySpec& spec, Rng& rng) {
    RenderedAttributes a{spec.appearance.hair, spec.appearance.skin, spec.appearance.shape, spec.appearance.eyewear,
                         spec.appearance.beard,
                         spec.behavior.scenes[static_cast<std::size_t>(uniform_int(rng, 0, kTypicalScenes - 1))],
                         spec.behavior.clothing[static_cast<std::size_t>(uniform_int(rng, 0, kTypicalClothing - 1))]};
    return {render_avatar(a, rng, false), a};
}

Drawn render_forgery(const SyntheticIdentitySpec& spec, Family family, Rng& rng) {
    Drawn base = {Raster(), RenderedAttributes{}};
    RenderedAttributes a{spec.appearance.hair, spec.appearance.skin, spec.appearance.shape, spec.appearance.eyewear,
                         spec.appearance.beard,
                         spec.behavior.scenes[static_cast<std::size_t>(uniform_int(rng, 0, kTypicalScenes - 1))],
                         spec.behavior.clothing[static_cast<std::size_t>(uniform_int(rng, 0, kTypicalClothing - 1))]};
    const bool swap = family == Family::simswap || family == Family::roop;
    if (swap) {
        // Donor face: at least one of hair / skin / face shape must change.
        do {
            if (family == Family::simswap) {
                a.skin = uniform_int(rng, 0, 3);
                a.shape = uniform_int(rng, 0, 3);
                a.beard = uniform_int(rng, 0, 1);
                if (coin(rng, 0.5)) a.hair = uniform_int(rng, 0, 5);
            } else {
                a.hair = uniform_int(rng, 0, 5);
                a.skin = uniform_int(rng, 0, 3);
                a.eyewear = uniform_int(rng, 0, 2);
                if (coin(rng, 0.5)) a.shape = uniform_int(rng, 0, 3);
            }
        } while (a.hair == spec.appearance.hair && a.skin == spec.appearance.skin && a.shape == spec.appearance.shape);
    } else {
        do {
            a.scene = uniform_int(rng, 0, static_cast<int>(kSceneWords.size()) - 1);
        } while (spec.behavior.has_scene(a.scene));
        do {
            a.clothing = uniform_int(rng, 0, static_cast<int>(kClothingWords.size()) - 1);
        } while (spec.behavior.has_clothing(a.clothing));
        if (family == Family::pulid && coin(rng, 0.5)) a.eyewear = draw_other(rng, 3, a.eyewear);
    }

    const int dx = uniform_int(rng, -1, 1);
    const int dy = uniform_int(rng, -1, 1);
    const float gain = uniform_float(rng, 0.92f, 1.08f);
    Canvas cv = draw(a, dx, dy);
    Raster& img = cv.image;
    apply_gain(img, gain);

    switch (family) {
        case Family::simswap: {
            const float amp = uniform_float(rng, 0.20f, 0.32f);
            const float shift = uniform_float(rng, 0.05f, 0.09f);
            const auto seam = seam_of(cv.head);
            for (int i = 0; i < kSide * kSide; ++i) {
                const int y = i / kSide;
                const int x = i % kSide;
                if (cv.head[static_cast<std::size_t>(i)]) {
                    img.at(y, x, 0) += shift;
                    img.at(y, x, 2) -= shift * 0.5f;
                }
                if (seam[static_cast<std::size_t>(i)])
                    for (int c = 0; c < kChannels; ++c) img.at(y, x, c) += uniform_float(rng, -amp, amp);
            }
            add_sensor_noise(img, rng);
            break;
        }
        case Family::roop: {
            const float amp = uniform_float(rng, 0.06f, 0.12f);
            const Raster blurred = box_blur(img);
            const auto seam = seam_of(cv.head);
            for (int i = 0; i < kSide * kSide; ++i) {
                const int y = i / kSide;
                const int x = i % kSide;
                if (cv.head[static_cast<std::size_t>(i)])
                    for (int c = 0; c < kChannels; ++c) img.at(y, x, c) = blurred.at(y, x, c);
                if (seam[static_cast<std::size_t>(i)])
                    for (int c = 0; c < kChannels; ++c) img.at(y, x, c) += uniform_float(rng, -amp, amp);
            }
            add_sensor_noise(img, rng);
            break;
        }
        case Family::photomaker: {
            const float m = uniform_float(rng, 0.6f, 1.0f);
            const Raster blurred = box_blur(img);
            for (std::size_t i = 0; i < img.pixels.size(); ++i)
                img.pixels[i] = img.pixels[i] * (1.0f - m) + blurred.pixels[i] * m;
            break;
        }
        case Family::storymaker: {
            const float levels = static_cast<float>(uniform_int(rng, 5, 7));
            for (float& v : img.pixels) v = std::round(std::clamp(v, 0.0f, 1.0f) * levels) / levels;
            break;
        }
        case Family::none: break;
        case Family::pulid: {
            const float amp = uniform_float(rng, 0.02f, 0.045f);
            for (int y = 0; y < kSide; ++y)
                for (int x = 0; x < kSide; ++x)
                    for (int c = 0; c < kChannels; ++c) img.at(y, x, c) += ((x + y) % 2 ? amp : -amp);
            break;
        }
    }
    clamp01(img);
    base.image = std::move(img);
    base.attributes = a;
    return base;
}

}  // namespace

AnomalyLabels anomalies_against(const RenderedAttributes& a, const SyntheticIdentitySpec& spec) {
    AnomalyLabels l;
    l.hairstyle = a.hair != spec.appearance.hair;
    l.skin_tone = a.skin != spec.appearance.skin;
    l.eyewear = a.eyewear != spec.appearance.eyewear;
    l.beard = a.beard != spec.appearance.beard;
    l.clothing_style = !spec.behavior.has_clothing(a.clothing);
    l.face_shape = a.shape != spec.appearance.shape;
    return l;
}

namespace {

std::string sample_name(const std::string& identity, const char* slug, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", index);
    return identity + "_" + slug + "_" + buf;
}

}  // namespace

Raster render_avatar(const RenderedAttributes& attributes, Rng& rng, bool clean) {
    const int dx = uniform_int(rng, -1, 1);
    const int dy = uniform_int(rng, -1, 1);
    const float gain = uniform_float(rng, 0.92f, 1.08f);
    Canvas cv = draw(attributes, dx, dy);
    apply_gain(cv.image, gain);
    if (!clean) add_sensor_noise(cv.image, rng);
    clamp01(cv.image);
    return std::move(cv.image);
}

SyntheticIdentitySpec sample_identity_spec(const std::string& identity_id, std::uint64_t seed,
                                           std::span<const SyntheticIdentitySpec> existing) {
    Rng rng = make_rng(derive_seed(seed, stable_hash(identity_id)));
    for (int attempt = 0; attempt < 10000; ++attempt) {
        SyntheticIdentitySpec s;
        s.identity_id = identity_id;
        s.seed = seed;
        s.appearance = {uniform_int(rng, 0, 5), uniform_int(rng, 0, 3), uniform_int(rng, 0, 3), uniform_int(rng, 0, 2),
                        uniform_int(rng, 0, 1)};
        s.behavior.scenes = distinct_draw<kTypicalScenes>(rng, static_cast<int>(kSceneWords.size()));
        s.behavior.clothing = distinct_draw<kTypicalClothing>(rng, static_cast<int>(kClothingWords.size()));
        const bool clear = std::all_of(existing.begin(), existing.end(), [&](const SyntheticIdentitySpec& o) {
            return o.appearance.distance(s.appearance) >= kSignatureMargin;
        });
        if (clear) return s;
    }
    throw GenerationError("could not draw a distinct signature for '" + identity_id + "'");
}

void check_signature_margin(const SyntheticIdentitySpec& spec, std::span<const SyntheticIdentitySpec> existing) {
    for (const auto& o : existing) {
        if (o.identity_id == spec.identity_id) continue;
        if (o.appearance.distance(spec.appearance) < kSignatureMargin)
            throw GenerationError("signature of '" + spec.identity_id + "' collides with '" + o.identity_id + "'");
    }
}

std::string_view method_name(ForgeryFamily f) { return f == Family::none ? "none" : info(f).method; }

bool is_train_family(ForgeryFamily f) { return f == Family::simswap || f == Family::photomaker; }

SyntheticIdentitySpec random_identity_spec(const std::string& identity_id, Rng& rng) {
    SyntheticIdentitySpec s;
    s.identity_id = identity_id;
    s.appearance = {uniform_int(rng, 0, 5), uniform_int(rng, 0, 3), uniform_int(rng, 0, 3), uniform_int(rng, 0, 2),
                    uniform_int(rng, 0, 1)};
    s.behavior.scenes = distinct_draw<kTypicalScenes>(rng, static_cast<int>(kSceneWords.size()));
    s.behavior.clothing = distinct_draw<kTypicalClothing>(rng, static_cast<int>(kClothingWords.size()));
    return s;
}

ManifestRecord render_sample(const SyntheticIdentitySpec& spec, ForgeryFamily family, std::uint64_t seed) {
    ManifestRecord r;
    r.identity_id = spec.identity_id;
    r.seed = seed;
    Rng rng = make_rng(seed);
    if (family == Family::none) {
        Drawn d = render_real(spec, rng);
        r.raster = std::move(d.image);
        r.attributes = d.attributes;
    } else {
        const FamilyInfo fi = info(family);
        r.label = Label::forged;
        r.method = fi.method;
        r.forgery_type = fi.type;
        r.split = fi.split;
        Drawn d = render_forgery(spec, family, rng);
        r.raster = std::move(d.image);
        r.attributes = d.attributes;
        r.annotations = anomalies_against(d.attributes, spec);
    }
    r.description = build_cot_description(r);
    return r;
}

std::vector<ManifestRecord> generate_records(const SyntheticIdentitySpec& spec, const CorpusQuota& quota,
                                             std::uint64_t corpus_seed) {
    if (quota.real_train < 0 || quota.forged_train < 0 || quota.real_test < 0 || quota.forged_test < 0)
        throw GenerationError("corpus quotas must be non-negative");
    const std::uint64_t base = derive_seed(corpus_seed, stable_hash(spec.identity_id));
    std::vector<ManifestRecord> out;
    std::uint64_t index = 0;

    auto make = [&](Family family, int i) {
        ManifestRecord r = render_sample(spec, family, derive_seed(base, index++));
        r.sample_id = sample_name(spec.identity_id, family == Family::none ? "real" : info(family).slug, i);
        return r;
    };

    // Real images; the test share is picked by hash of sample_id.
    std::vector<ManifestRecord> reals;
    for (int i = 0; i < quota.real_train + quota.real_test; ++i) reals.push_back(make(Family::none, i));
    std::vector<std::size_t> order(reals.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ha = stable_hash(reals[a].sample_id);
        const auto hb = stable_hash(reals[b].sample_id);
        return ha != hb ? ha < hb : reals[a].sample_id < reals[b].sample_id;
    });
    for (std::size_t k = 0; k < order.size(); ++k)
        reals[order[k]].split = static_cast<int>(k) < quota.real_test ? Split::test : Split::train;
    for (auto& r : reals) out.push_back(std::move(r));

    auto forge = [&](Family family, int i) { out.push_back(make(family, i)); };
    int simswap = 0, photomaker = 0, roop = 0, storymaker = 0, pulid = 0;
    for (int i = 0; i < quota.forged_train; ++i) {
        if (i % 2 == 0) forge(Family::simswap, simswap++);
        else forge(Family::photomaker, photomaker++);
    }
    for (int i = 0; i < quota.forged_test; ++i) {
        switch (i % 3) {
            case 0: forge(Family::roop, roop++); break;
            case 1: forge(Family::storymaker, storymaker++); break;
            default: forge(Family::pulid, pulid++); break;
        }
    }
    for (const auto& r : out) validate_record(r);
    canonical_order(out);
    return out;
}

std::vector<ManifestRecord> generate_identity_corpus(const SyntheticIdentitySpec& spec, const CorpusQuota& quota,
                                                     std::span<const SyntheticIdentitySpec> existing,
                                                     std::uint64_t corpus_seed) {
    if (quota.real_train < 1 || quota.forged_train < 1 || quota.real_test < 1 || quota.forged_test < 1)
        throw GenerationError("every corpus quota must be at least 1");
    check_signature_margin(spec, existing);
    return generate_records(spec, quota, corpus_seed);
}

std::string build_cot_description(Label label, const AnomalyLabels& anomalies, const RenderedAttributes* observed) {
    if (observed) {
        // Each dimension is named, its observed value stated, then judged.
        const RenderedAttributes& a = *observed;
        const std::array<std::pair<std::string_view, std::pair<std::string_view, bool>>, 6> dims = {{
            {"hairstyle", {kHairWords[static_cast<std::size_t>(a.hair)], anomalies.hairstyle}},
            {"skin_tone", {kSkinWords[static_cast<std::size_t>(a.skin)], anomalies.skin_tone}},
            {"face_shape", {kShapeWords[static_cast<std::size_t>(a.shape)], anomalies.face_shape}},
            {"eyewear", {kEyewearWords[static_cast<std::size_t>(a.eyewear)], anomalies.eyewear}},
            {"beard", {kBeardWords[static_cast<std::size_t>(a.beard)], anomalies.beard}},
            {"clothing_style", {kClothingWords[static_cast<std::size_t>(a.clothing)], anomalies.clothing_style}},
        }};
        std::string out;
        for (const auto& [dim, v] : dims)
            out += std::string(dim) + " " + std::string(v.first) + (v.second ? " inconsistent " : " consistent ");
        if (label == Label::forged && !anomalies.any()) out += ". the image shows synthesis artifacts ";
        return out + (label == Label::forged || anomalies.any() ? ". so answer Yes" : ". so answer No");
    }
    if (label == Label::real) return "all traits consistent . so answer No";
    std::string out;
    const auto vals = anomalies.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!vals[i]) continue;
        out += std::string(AnomalyLabels::kNames[i]) + " inconsistent . ";
    }
    if (out.empty()) out = "the image shows synthesis artifacts . ";
    return out + "so answer Yes";
}

std::string build_cot_description(const ManifestRecord& record) {
    return build_cot_description(record.label, record.annotations,
                                 record.attributes ? &*record.attributes : nullptr);
}

const SyntheticIdentitySpec& SyntheticDataset::spec(const std::string& identity_id) const {
    for (const auto& s : targets)
        if (s.identity_id == identity_id) return s;
    for (const auto& s : generic)
        if (s.identity_id == identity_id) return s;
    throw ManifestError("no identity spec for '" + identity_id + "'");
}

SyntheticDataset generate_dataset(const DatasetConfig& config) {
    if (config.identities < 1) throw GenerationError("need at least one target identity");
    SyntheticDataset ds;
    std::vector<SyntheticIdentitySpec> all;
    for (int i = 0; i < config.identities; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "person%02d", i);
        ds.targets.push_back(sample_identity_spec(name, config.seed, all));
        all.push_back(ds.targets.back());
    }
    for (const auto& spec : ds.targets) {
        auto recs = generate_identity_corpus(spec, config.quota, all, config.seed);
        for (auto& r : recs) ds.target_records.push_back(std::move(r));
    }
    // The generic population is drawn independently of the targets.
    const std::uint64_t generic_seed = derive_seed(config.seed, 0x67656e65726963ULL);
    for (int i = 0; i < config.generic_identities; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "generic%02d", i);
        ds.generic.push_back(sample_identity_spec(name, generic_seed, {}));
        auto recs = generate_records(ds.generic.back(), {config.generic_real, config.generic_forged, 0, 0}, generic_seed);
        for (auto& r : recs) ds.generic_records.push_back(std::move(r));
    }
    canonical_order(ds.target_records);
    canonical_order(ds.generic_records);
    return ds;
}

}  // namespace idprior::data
