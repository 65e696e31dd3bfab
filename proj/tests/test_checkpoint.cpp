#include "ilbo/checkpoint.hpp"

#include "scratch_dir.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace ilbo;

namespace {

NetSpec bounded_spec() {
    NetSpec s;
    s.input_dim = 3;
    s.hidden_layers = {7, 5};
    s.output_dim = 2;
    s.use_layer_norm = true;
    s.output = OutputActivation::bounded((Vec(2) << -1.0, 0.0).finished(), (Vec(2) << 1.0, 0.25).finished());
    return s;
}

NetSpec critic_spec() {
    NetSpec s;
    s.input_dim = 4;
    s.hidden_layers = {6};
    s.output_dim = 1;
    s.encoder = Encoder{3, 4, 2};
    return s;
}

Checkpoint sample_checkpoint() {
    Checkpoint ck;
    ck.meta = {{"domain", "nav2"}, {"note", "value with spaces  inside"}, {"empty", ""}};
    ck.networks.emplace_back("policy", net_init(bounded_spec(), 3));
    ck.networks.emplace_back("critic", net_init(critic_spec(), 4));
    // Awkward values that a short decimal format would not survive.
    ck.networks[0].second.values(0) = 0.1 + 0.2;
    ck.networks[0].second.values(1) = std::nextafter(1.0, 2.0);
    ck.networks[0].second.values(2) = -4.9406564584124654e-324;
    ck.networks[0].second.values(3) = 1.7976931348623157e308;
    return ck;
}

std::string to_text(const Checkpoint& ck) {
    std::ostringstream os;
    write_checkpoint(os, ck);
    return os.str();
}

Checkpoint from_text(const std::string& s) {
    std::istringstream is(s);
    return read_checkpoint(is);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    const Checkpoint ck = sample_checkpoint();
    const Checkpoint back = from_text(to_text(ck));
    EXPECT_EQ(back.meta, ck.meta);
    ASSERT_EQ(back.networks.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.networks[i].first, ck.networks[i].first);
        EXPECT_TRUE(back.networks[i].second == ck.networks[i].second);
        const Vec& a = back.networks[i].second.values;
        const Vec& b = ck.networks[i].second.values;
        for (Eigen::Index k = 0; k < a.size(); ++k)
            EXPECT_EQ(std::memcmp(&a(k), &b(k), sizeof(double)), 0) << i << ":" << k;
    }
    // Writing again reproduces the same bytes.
    EXPECT_EQ(to_text(back), to_text(ck));
}

TEST(Checkpoint, FileRoundTripAndLookup) {
    ScratchDir dir("ckpt");
    const Checkpoint ck = sample_checkpoint();
    save_checkpoint(dir / "a.ckpt", ck);
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_TRUE(back.network("critic") == ck.network("critic"));
    EXPECT_EQ(back.find_meta("note").value(), "value with spaces  inside");
    EXPECT_EQ(back.find_meta("empty").value(), "");
    EXPECT_FALSE(back.find_meta("missing"));
    EXPECT_THROW(back.network("nope"), std::out_of_range);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
}

TEST(Checkpoint, HeaderFormat) {
    const std::string text = to_text(sample_checkpoint());
    EXPECT_EQ(text.rfind("ILBO-CKPT v1\n", 0), 0u);
    EXPECT_NE(text.find("net policy in=3 hidden=7,5 out=2 act=bounded ln=1 enc=none count="), std::string::npos);
    EXPECT_NE(text.find("net critic in=4 hidden=6 out=1 act=linear ln=0 enc=3,4,2 count="), std::string::npos);
}

TEST(Checkpoint, MalformedInputsRejected) {
    const std::string good = to_text(sample_checkpoint());
    EXPECT_THROW(from_text(""), std::runtime_error);
    EXPECT_THROW(from_text("ILBO-CKPT v2\n"), std::runtime_error);
    EXPECT_THROW(from_text(good + "garbage line\n"), std::runtime_error);
    EXPECT_THROW(from_text("ILBO-CKPT v1\nmeta lonely\n"), std::runtime_error);

    // Truncated values.
    EXPECT_THROW(from_text(good.substr(0, good.size() - 30)), std::runtime_error);

    // Wrong count field.
    std::string bad = good;
    const auto pos = bad.find("count=");
    bad.replace(pos, 6, "count=1");
    EXPECT_THROW(from_text(bad), std::runtime_error);

    // Non-finite parameter.
    std::string nan_text = "ILBO-CKPT v1\nnet x in=1 hidden=- out=1 act=linear ln=0 enc=none count=2\n1 nan\n";
    EXPECT_ANY_THROW(from_text(nan_text));

    // Missing field and unknown activation.
    EXPECT_THROW(from_text("ILBO-CKPT v1\nnet x in=1 out=1 act=linear ln=0 enc=none count=2\n1 2\n"),
                 std::runtime_error);
    EXPECT_THROW(from_text("ILBO-CKPT v1\nnet x in=1 hidden=- out=1 act=tanh ln=0 enc=none count=2\n1 2\n"),
                 std::runtime_error);
    const Checkpoint ok = from_text("ILBO-CKPT v1\nnet x in=1 hidden=- out=1 act=linear ln=0 enc=none count=2\n1 2\n");
    EXPECT_DOUBLE_EQ(ok.network("x").values(1), 2.0);
}

TEST(Checkpoint, MetaWhitespaceRejectedOnWrite) {
    Checkpoint ck;
    ck.meta = {{"bad key", "v"}};
    std::ostringstream os;
    EXPECT_THROW(write_checkpoint(os, ck), std::invalid_argument);
    ck.meta = {{"k", "line\nbreak"}};
    EXPECT_THROW(write_checkpoint(os, ck), std::invalid_argument);
}
