#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "pzres/config.hpp"
#include "pzres/degrade.hpp"
#include "pzres/io.hpp"
#include "support.hpp"

using namespace pzres;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("pzres_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

Checkpoint trained_checkpoint(std::uint64_t steps) {
    NetworkConfig net;
    net.bands = 5;
    net.stages = 2;
    net.blocks_per_stage = 1;
    net.seed = 3;
    TrainConfig tc;
    tc.iterations = 10;
    tc.crop = 8;
    tc.eval_every = 2;
    const auto hr = synth_scene(5, 8, 8, 2, 1);
    DegradeConfig dc;
    dc.scale = 2;
    Trainer trainer(net, tc,
                    {{blur_decimate(hr, dc).cast<float>(), apply_spectral_response(hr, synthetic_response(5, 3)).cast<float>(),
                      hr.cast<float>()}});
    trainer.run(steps);
    return make_checkpoint(trainer);
}

void put_u32(std::string& bytes, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes[at + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

}  // namespace

TEST(CubeFile, HeaderLayoutIsLittleEndian) {
    HsiCube<float> cube = make_cube<float>(2, 3, 4);
    cube[0] = 1.0f;
    const std::string bytes = encode_cube(cube);
    ASSERT_EQ(bytes.size(), 20u + 2 * 3 * 4 * 4);
    EXPECT_EQ(bytes.substr(0, 4), "HSC1");
    EXPECT_EQ(bytes.substr(4, 16), std::string("\x02\0\0\0\x03\0\0\0\x04\0\0\0\0\0\0\0", 16));
    EXPECT_EQ(bytes.substr(20, 4), std::string("\x00\x00\x80\x3f", 4));
}

TEST(CubeFile, RoundTripIsBitwise) {
    TempDir dir;
    Rng rng(1);
    auto cube = testkit::random_tensor<float>(Dims{1, 3, 5, 7}, rng, 0.0, 1.0);
    cube[3] = -0.0f;
    cube[4] = std::numeric_limits<float>::denorm_min();
    const std::string path = dir.file("nested/dir/cube.hsc");
    write_cube(path, cube);
    const auto back = read_cube(path);
    EXPECT_EQ(back.dims(), cube.dims());
    EXPECT_EQ(encode_cube(back), encode_cube(cube));
    EXPECT_EQ(io::read_file(path), encode_cube(cube));
}

TEST(CubeFile, RejectsMalformedFiles) {
    const std::string good = encode_cube(make_cube<float>(2, 2, 2, 0.5f));
    EXPECT_THROW(decode_cube(""), InputError);
    EXPECT_THROW(decode_cube("HSC2" + good.substr(4)), InputError);
    EXPECT_THROW(decode_cube(good.substr(0, good.size() - 1)), InputError);
    EXPECT_THROW(decode_cube(good + "x"), InputError);
    auto bad_dtype = good;
    put_u32(bad_dtype, 16, 1);
    EXPECT_THROW(decode_cube(bad_dtype), InputError);
    auto zero = good;
    put_u32(zero, 4, 0);
    EXPECT_THROW(decode_cube(zero), InputError);
    EXPECT_THROW(read_cube("/nonexistent/file.hsc"), InputError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
    const auto ck = trained_checkpoint(4);
    const std::string bytes = encode_checkpoint(ck);
    EXPECT_EQ(bytes.substr(0, 4), "PZCK");
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(back.network, ck.network);
    EXPECT_TRUE(back.train == ck.train);
    EXPECT_EQ(back.state.values, ck.state.values);
    EXPECT_EQ(back.state.rng_state, ck.state.rng_state);
    ASSERT_EQ(back.state.history.size(), 4u);
    EXPECT_TRUE(std::isnan(back.state.history[0].psnr));
    EXPECT_FALSE(std::isnan(back.state.history[1].psnr));
}

TEST(Checkpoint, NonDefaultConfigurationSurvives) {
    Checkpoint ck;
    ck.network.bands = 9;
    ck.network.kernel_size = 5;
    ck.network.zm_norm = false;
    ck.network.upsample = UpsampleMode::bicubic;
    ck.network.seed = 1ULL << 60;
    ck.train.adam.lr0 = 3.3e-4;
    ck.train.loss.lambda = 0.1;
    const auto back = decode_checkpoint(encode_checkpoint(ck));
    EXPECT_EQ(back.network, ck.network);
    EXPECT_TRUE(back.train == ck.train);
}

TEST(Checkpoint, ResumesBitIdentically) {
    const auto ten = trained_checkpoint(10);
    const auto four = decode_checkpoint(encode_checkpoint(trained_checkpoint(4)));

    const auto hr = synth_scene(5, 8, 8, 2, 1);
    DegradeConfig dc;
    dc.scale = 2;
    Trainer resumed(four.network, four.train,
                    {{blur_decimate(hr, dc).cast<float>(), apply_spectral_response(hr, synthetic_response(5, 3)).cast<float>(),
                      hr.cast<float>()}});
    resumed.restore(four.state);
    resumed.run_to_end();
    EXPECT_EQ(encode_checkpoint(make_checkpoint(resumed)), encode_checkpoint(ten));
}

TEST(Checkpoint, NetworkFromCheckpointUsesStoredValues) {
    const auto ck = trained_checkpoint(3);
    const auto net = network_from_checkpoint(ck);
    const auto params = net.parameters();
    ASSERT_EQ(params.size(), ck.state.values.size());
    for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, ck.state.values[i]);
}

TEST(Checkpoint, RejectsMalformedFiles) {
    const std::string good = encode_checkpoint(trained_checkpoint(1));
    EXPECT_THROW(decode_checkpoint("PZC"), InputError);
    EXPECT_THROW(decode_checkpoint("XXXX" + good.substr(4)), InputError);
    auto version = good;
    put_u32(version, 4, 2);
    EXPECT_THROW(decode_checkpoint(version), InputError);
    EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 3)), InputError);
    EXPECT_THROW(decode_checkpoint(good + std::string(1, '\0')), InputError);
    EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() / 2)), InputError);
    EXPECT_THROW(load_checkpoint("/nonexistent/ck.pzck"), InputError);
}

TEST(Pgm, BinaryLayout) {
    const GrayImage img{2, 3, {0, 1, 2, 253, 254, 255}};
    const std::string bytes = encode_pgm(img);
    EXPECT_EQ(bytes.substr(0, 11), "P5\n3 2\n255\n");
    EXPECT_EQ(bytes.size(), 11u + 6);
    EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);
}

TEST(HistoryCsv, HeaderAndRows) {
    std::vector<HistoryRecord> h(2);
    h[0] = {1, 1e-3, 0.5, 0.25, 0.25};
    h[1] = {2, 9e-4, 0.375, 0.125, 0.25, 31.5};
    EXPECT_EQ(format_history(h), "iter,lr,loss,term1,term2,psnr\n1,0.001,0.5,0.25,0.25,\n2,9e-04,0.375,0.125,0.25,31.5\n");
}

TEST(ReportCsv, HeaderAndRows) {
    MetricReport r;
    r.psnr = 100;
    r.assim = 1;
    r.sam = 0;
    r.ergas = 0;
    r.band_psnr = {100, 100};
    EXPECT_EQ(format_report_csv(r),
              "metric,value\npsnr,100\nassim,1\nsam,0\nergas,0\npsnr_band_0,100\npsnr_band_1,100\n");
}

TEST(RunConfig, ParsesCommentsAndWhitespace) {
    const auto rc = RunConfig::parse_string("# heading\n bands = 16 \nseed=7 # trailing\n\nzm_norm = off\n",
                                            keys::network());
    const auto cfg = network_config_from(rc);
    EXPECT_EQ(cfg.bands, 16u);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_FALSE(cfg.zm_norm);
    EXPECT_EQ(cfg.stages, 3u);
}

TEST(RunConfig, RejectsUnknownDuplicateAndMalformed) {
    EXPECT_THROW(RunConfig::parse_string("bandz = 3\n", keys::network()), InputError);
    EXPECT_THROW(RunConfig::parse_string("bands = 3\nbands = 4\n", keys::network()), InputError);
    EXPECT_THROW(RunConfig::parse_string("bands 3\n", keys::network()), InputError);
    EXPECT_THROW(RunConfig::parse_string(" = 3\n", keys::network()), InputError);
    EXPECT_THROW(network_config_from(RunConfig::parse_string("bands = -3\n", keys::network())), InputError);
    EXPECT_THROW(network_config_from(RunConfig::parse_string("dense = maybe\n", keys::network())), InputError);
    EXPECT_THROW(network_config_from(RunConfig::parse_string("upsample = nearest\n", keys::network())), ConfigError);
    EXPECT_THROW(train_config_from(RunConfig::parse_string("lr0 = fast\n", keys::train())), InputError);
    EXPECT_THROW(train_config_from(RunConfig::parse_string("lambda = 0\n", keys::train())), InputError);
    EXPECT_THROW(RunConfig::load("/nonexistent/run.cfg", keys::network()), InputError);
}

TEST(RunConfig, EveryFieldRoundTrips) {
    NetworkConfig n;
    n.bands = 12;
    n.msi_bands = 4;
    n.stages = 2;
    n.growth_factor = 3;
    n.blocks_per_stage = 5;
    n.kernel_size = 1;
    n.zm_norm = false;
    n.refinement = false;
    n.dense = false;
    n.upsample = UpsampleMode::bicubic;
    n.seed = 99;
    TrainConfig t;
    t.iterations = 123;
    t.batch = 2;
    t.crop = 32;
    t.eval_every = 7;
    t.adam.beta1 = 0.8;
    t.adam.beta2 = 0.99;
    t.adam.eps = 1e-7;
    t.adam.lr0 = 0.1 + 0.2;
    t.adam.lr_final = 1e-6;
    t.loss.lambda = 0.3;
    DegradeConfig d;
    d.scale = 8;
    d.sigma = 1.25;
    d.phase = 3;
    d.noise_lr = 0.01;
    d.noise_msi = 0.02;
    d.noise_seed = 5;

    RunConfig rc;
    write_config(rc, n);
    write_config(rc, t);
    rc.set("scale", std::uint64_t{8});
    rc.set("sigma", 1.25);
    rc.set("phase", std::uint64_t{3});
    rc.set("noise_lr", 0.01);
    rc.set("noise_msi", 0.02);
    rc.set("noise_seed", std::uint64_t{5});

    std::set<std::string> all = keys::network();
    all.insert(keys::train().begin(), keys::train().end());
    all.insert(keys::degrade().begin(), keys::degrade().end());
    const auto back = RunConfig::parse_string(rc.serialize(), all);
    EXPECT_EQ(network_config_from(back), n);
    EXPECT_TRUE(train_config_from(back) == t);
    const auto d2 = degrade_config_from(back);
    EXPECT_EQ(d2.scale, d.scale);
    EXPECT_EQ(d2.sigma, d.sigma);
    EXPECT_EQ(d2.phase, d.phase);
    EXPECT_EQ(d2.noise_lr, d.noise_lr);
    EXPECT_EQ(d2.noise_msi, d.noise_msi);
    EXPECT_EQ(d2.noise_seed, d.noise_seed);
}

TEST(RunConfig, MergeLetsLaterEntriesWin) {
    auto base = RunConfig::parse_string("bands = 4\nseed = 1\n", {});
    base.merge(RunConfig::parse_string("seed = 2\n", {}));
    EXPECT_EQ(base.get("bands"), "4");
    EXPECT_EQ(base.get("seed"), "2");
}
