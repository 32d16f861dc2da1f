#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "densedet/config.hpp"
#include "densedet/dataset_io.hpp"
#include "densedet/scene.hpp"

using namespace densedet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("densedet_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(ImageIo, PngRoundTrip) {
    TempDir tmp;
    ImageU8 img{8, 6, {}};
    img.pixels.resize(8 * 6 * 3);
    for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = uint8_t(i * 7);
    std::string p = (tmp.path / "x.png").string();
    write_png(p, img);
    ImageU8 back = read_png(p);
    EXPECT_EQ(back.width, img.width);
    EXPECT_EQ(back.height, img.height);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(LabelIo, SixDecimalFormat) {
    TempDir tmp;
    std::string p = (tmp.path / "l.txt").string();
    write_label_file(p, {{2, 0.123456f, 0.5f, 0.25f, 0.0625f}});
    std::ifstream f(p);
    std::string line;
    std::getline(f, line);
    EXPECT_EQ(line, "2 0.123456 0.500000 0.250000 0.062500");
    auto back = read_label_file(p);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].class_id, 2);
    EXPECT_NEAR(back[0].cx, 0.123456, 1e-6);
}

TEST(CatalogIo, RoundTrip) {
    TempDir tmp;
    ClassCatalog cat = make_default_catalog(6);
    cat[0].group = ClassGroup::majority;
    cat[0].whitelisted = true;
    std::string p = (tmp.path / "catalog.txt").string();
    cat.save(p);
    ClassCatalog back = ClassCatalog::load(p);
    ASSERT_EQ(back.size(), 6);
    for (int c = 0; c < 6; ++c) {
        EXPECT_EQ(back[c].name, cat[c].name);
        EXPECT_EQ(back[c].status_code, cat[c].status_code);
        EXPECT_EQ(back[c].group, cat[c].group);
        EXPECT_EQ(back[c].whitelisted, cat[c].whitelisted);
    }
}

TEST(Catalog, RejectsWhitelistedMinority) {
    auto cat = make_default_catalog(3);
    std::vector<ClassSpec> classes = cat.classes();
    classes[1].whitelisted = true;  // still minority
    EXPECT_THROW(ClassCatalog{classes}, ConfigError);
}

TEST(DatasetIo, SplitDirRoundTrip) {
    TempDir tmp;
    SceneConfig cfg;
    cfg.image_size = 128;
    cfg.num_images = 3;
    cfg.cells_min = 5;
    cfg.cells_max = 8;
    cfg.cell_min_px = 14;
    cfg.cell_max_px = 24;
    cfg.class_weights = {0.6, 0.4};
    auto ds = generate_dataset(cfg, 3);
    ClassCatalog catalog = make_default_catalog(2);
    apply_label_cap(ds, catalog, 5, 1);  // force some hidden labels

    std::string dir = (tmp.path / "train").string();
    write_split_dir(dir, ds);
    auto back = read_split_dir(dir);
    ASSERT_EQ(back.size(), ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back[i].image.pixels, ds[i].image.pixels);
        EXPECT_EQ(back[i].full_gt.size(), ds[i].full_gt.size());
        EXPECT_EQ(back[i].visible.size(), ds[i].visible.size());
    }
}

TEST(DatasetIo, FingerprintDetectsChanges) {
    TempDir tmp;
    std::ofstream(tmp.path / "a.txt") << "hello";
    uint64_t fp1 = dataset_fingerprint(tmp.path.string());
    uint64_t fp1b = dataset_fingerprint(tmp.path.string());
    EXPECT_EQ(fp1, fp1b);
    std::ofstream(tmp.path / "a.txt") << "hellp";
    EXPECT_NE(dataset_fingerprint(tmp.path.string()), fp1);
}

TEST(KvConfig, ParseAndOverride) {
    KvConfig kv = KvConfig::parse("# comment\ntrain.epochs = 12\ncfpl.enabled = true\n");
    EXPECT_EQ(kv.get_int("train.epochs", 0), 12);
    EXPECT_TRUE(kv.get_bool("cfpl.enabled", false));
    kv.set_override("train.epochs=20");
    EXPECT_EQ(kv.get_int("train.epochs", 0), 20);
    EXPECT_EQ(kv.get_double("missing", 1.5), 1.5);
}

TEST(KvConfig, Errors) {
    EXPECT_THROW(KvConfig::parse("not an assignment\n"), ConfigError);
    KvConfig kv = KvConfig::parse("x = abc\n");
    EXPECT_THROW(kv.get_int("x", 0), ConfigError);
    EXPECT_THROW(kv.get_bool("x", false), ConfigError);
}

TEST(KvConfig, SerializeStable) {
    KvConfig a = KvConfig::parse("b = 2\na = 1\n");
    KvConfig b = KvConfig::parse("a = 1\nb = 2\n");
    EXPECT_EQ(a.serialize(), b.serialize());
}
