// Copyright 2026 The stylebridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <openssl/sha.h>

#include <cstring>
#include <filesystem>

#include "stylebridge/checkpoint.hpp"
#include "stylebridge/discriminator.hpp"

namespace stylebridge {
namespace {

namespace fs = std::filesystem;

GeneratorConfig small_arch() {
    GeneratorConfig a;
    a.z_dim = 8;
    a.w_dim = 8;
    a.mapping_layers = 2;
    a.resolutions = {4, 8};
    a.channels = {4, 4};
    return a;
}

class CheckpointTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("sb_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path path(const std::string& f) const { return dir_ / f; }

    fs::path dir_;
};

template <class T>
T read_le(const Bytes& b, std::size_t& pos) {
    T v;
    std::memcpy(&v, b.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
    auto m = GeneratorModel::initialize(small_arch(), 3, "A");
    m.metadata().train_seed = 42;
    m.metadata().recipe = json{{"note", "x"}, {"values", {1, 2, 3}}};
    save_checkpoint(m, path("a.sbg"));
    const auto loaded = load_checkpoint(path("a.sbg"));
    EXPECT_TRUE(bit_equal(loaded.params(), m.params()));
    EXPECT_EQ(loaded.metadata(), m.metadata());
    EXPECT_EQ(loaded.arch(), m.arch());
    save_checkpoint(loaded, path("b.sbg"));
    EXPECT_EQ(read_file(path("a.sbg")), read_file(path("b.sbg")));
}

// Walks the file with the documented byte layout, independently of the
// library reader.
TEST_F(CheckpointTest, FileFollowsDocumentedLayout) {
    const auto m = GeneratorModel::initialize(small_arch(), 3, "A");
    const std::string digest = save_checkpoint(m, path("a.sbg"));
    const Bytes b = read_file(path("a.sbg"));
    ASSERT_GT(b.size(), 52u);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "STYLEBRG");
    std::size_t pos = 8;
    EXPECT_EQ(read_le<std::uint32_t>(b, pos), 1u);
    const auto meta_len = read_le<std::uint64_t>(b, pos);
    const auto meta = json::parse(b.begin() + pos, b.begin() + pos + meta_len);
    pos += meta_len;
    EXPECT_EQ(meta.at("domain"), "A");
    const auto count = read_le<std::uint32_t>(b, pos);
    ASSERT_EQ(count, m.params().size());
    for (const auto& [name, t] : m.params().entries()) {
        const auto k = read_le<std::uint32_t>(b, pos);
        EXPECT_EQ(std::string(b.begin() + pos, b.begin() + pos + k), name);
        pos += k;
        EXPECT_EQ(read_le<std::uint8_t>(b, pos), 1);
        const auto rank = read_le<std::uint8_t>(b, pos);
        ASSERT_EQ(rank, t.rank());
        for (int d = 0; d < rank; ++d) EXPECT_EQ(read_le<std::uint32_t>(b, pos), static_cast<std::uint32_t>(t.dim(d)));
        const auto payload = read_le<std::uint64_t>(b, pos);
        ASSERT_EQ(payload, t.numel() * 8);
        EXPECT_EQ(std::memcmp(b.data() + pos, t.data(), payload), 0) << name;
        pos += payload;
    }
    ASSERT_EQ(pos + 32, b.size());
    unsigned char md[SHA256_DIGEST_LENGTH];
    SHA256(b.data(), pos, md);
    EXPECT_EQ(std::memcmp(md, b.data() + pos, 32), 0);
    EXPECT_EQ(digest, to_hex(md, 32));
    EXPECT_EQ(digest, model_digest(m));
}

TEST_F(CheckpointTest, TruncatedFileIsRejected) {
    save_checkpoint(GeneratorModel::initialize(small_arch(), 3), path("a.sbg"));
    Bytes b = read_file(path("a.sbg"));
    for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{40}, b.size() / 2, b.size() - 1}) {
        write_file(path("t.sbg"), Bytes(b.begin(), b.begin() + keep));
        EXPECT_THROW(load_checkpoint(path("t.sbg")), CheckpointError) << "kept " << keep;
    }
}

TEST_F(CheckpointTest, ModifiedByteFailsDigest) {
    save_checkpoint(GeneratorModel::initialize(small_arch(), 3), path("a.sbg"));
    Bytes b = read_file(path("a.sbg"));
    b[b.size() / 2] ^= 0x01;
    write_file(path("m.sbg"), b);
    EXPECT_THROW(load_checkpoint(path("m.sbg")), DigestMismatch);
}

TEST_F(CheckpointTest, UnknownVersionIsRejected) {
    save_checkpoint(GeneratorModel::initialize(small_arch(), 3), path("a.sbg"));
    Bytes b = read_file(path("a.sbg"));
    b[8] = 2;
    write_file(path("v.sbg"), b);
    EXPECT_THROW(load_checkpoint(path("v.sbg")), VersionError);
}

TEST_F(CheckpointTest, MissingFileIsReported) { EXPECT_THROW(load_checkpoint(path("none.sbg")), CheckpointError); }

TEST_F(CheckpointTest, DiscriminatorIsNotAGenerator) {
    save_discriminator(Discriminator::initialize(small_arch(), 1), path("d.sbg"));
    EXPECT_THROW(load_checkpoint(path("d.sbg")), CheckpointError);
    const auto d = load_discriminator(path("d.sbg"));
    EXPECT_TRUE(bit_equal(d.params(), Discriminator::initialize(small_arch(), 1).params()));
}

TEST_F(CheckpointTest, MissingTensorIsRejected) {
    auto c = to_container(GeneratorModel::initialize(small_arch(), 3));
    c.tensors.pop_back();
    write_file(path("x.sbg"), serialize(c));
    EXPECT_THROW(load_checkpoint(path("x.sbg")), CheckpointError);
}

TEST(Lineage, RootAndParents) {
    auto base = GeneratorModel::initialize(small_arch(), 1);
    auto child = base;
    child.metadata().parents = {model_digest(base)};
    child.metadata().lineage = {model_digest(base)};
    EXPECT_TRUE(declares_parent(child, base));
    EXPECT_FALSE(declares_parent(base, child));
    EXPECT_EQ(lineage_root(child), model_digest(base));
    EXPECT_EQ(lineage_root(base), model_digest(base));
}

}  // namespace
}  // namespace stylebridge
