#include "fixtures.hpp"

#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"
#include "snprobe/manifest.hpp"

#include <gtest/gtest.h>

using namespace snprobe;

TEST(Manifest, JsonRoundTrip) {
    fixtures::TempDir dir("manifest");
    const auto m = fixtures::manifest_for({1, 0, 1}, {1, 1, 0});
    save_manifest(dir / "m.json", m);
    const auto back = load_manifest(dir / "m.json");
    EXPECT_EQ(back.dataset_id, m.dataset_id);
    EXPECT_EQ(back.sample_ids, m.sample_ids);
    EXPECT_EQ(back.labels, m.labels);
    EXPECT_EQ(back.model_preds, m.model_preds);
    const auto counts = back.class_counts();
    EXPECT_EQ(counts.num_pos, 2u);
    EXPECT_EQ(counts.num_neg, 1u);
}

TEST(Manifest, RejectsNonBinaryAndRaggedColumns) {
    auto j = to_json(fixtures::manifest_for({1, 0}, {0, 0}));
    j["labels"][1] = 2;
    EXPECT_THROW(manifest_from_json(j), DataError);

    auto ragged = fixtures::manifest_for({1, 0}, {0, 0});
    ragged.model_preds.pop_back();
    EXPECT_THROW(ragged.validate(), DataError);

    EXPECT_THROW(manifest_from_json(nlohmann::json::array()), FormatError);
    EXPECT_THROW(manifest_from_json({{"dataset_id", "x"}}), FormatError);
}

TEST(Manifest, LengthMustMatchDump) {
    DumpHeader h;
    h.num_samples = 3;
    h.num_layers = 1;
    h.hidden_dim = 1;
    EXPECT_THROW(fixtures::manifest_for({1, 0}, {0, 0}).validate_against(h), DataError);
    EXPECT_NO_THROW(fixtures::manifest_for({1, 0, 1}, {0, 0, 1}).validate_against(h));
}

TEST(Manifest, BrokenJsonIsFormatError) {
    fixtures::TempDir dir("manifest");
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(load_manifest(dir / "bad.json"), FormatError);
    EXPECT_THROW(load_manifest(dir / "absent.json"), IoError);
}

TEST(JsonNumbers, NineSignificantDigits) {
    EXPECT_EQ(sig9(2.0 / 3.0), 0.666666667);
    EXPECT_EQ(sig9(0.1f), 0.1);
    EXPECT_EQ(sig9(0.924f), 0.924);
    EXPECT_EQ(static_cast<float>(sig9(0.953999996f)), 0.953999996f);
    EXPECT_EQ(format_sig9(-1.8f), "-1.8");
    EXPECT_EQ(format_sig9(1.0 / 3.0), "0.333333333");
}
