#include "imdp/model.hpp"

namespace imdp {

Model::Model(const Config& cfg) : cfg_(cfg) {
    validate_config(cfg);
    RngFactory factory(cfg.seed);
    branch::BranchHyper hyper{cfg.branch_stem, cfg.branch_mid, cfg.branch_feat, 4};

    Rng r_rgb = factory.stream("model.branch.rgb");
    Rng r_srm = factory.stream("model.branch.srm");
    Rng r_bay = factory.stream("model.branch.bayar");
    Rng r_np = factory.stream("model.branch.noiseprint");
    rgb_ = branch::ViewBranch(3, hyper, r_rgb);
    srm_ = branch::ViewBranch(noise::SrmKernels::standard().count(), hyper, r_srm);
    bayar_branch_ = branch::ViewBranch(cfg.bayar_kernels, hyper, r_bay);
    noiseprint_branch_ = branch::ViewBranch(1, hyper, r_np);

    Rng r_bk = factory.stream("model.bayar_kernels");
    bayar_ = noise::BayarKernelSet(cfg.bayar_kernels, cfg.bayar_kernel_size, r_bk);
    noise::bayar_project_or_reinit(bayar_, r_bk);

    Rng r_nps = factory.stream("model.noiseprint_surrogate");
    noiseprint_ = noise::NoiseprintSurrogate(cfg.noiseprint_hidden, r_nps);

    foundation::FoundationSpec spec;
    spec.encoder_channels = cfg.encoder_channels;
    spec.prompt_dim = cfg.prompt_dim;
    Rng r_fm = factory.stream("model.foundation");
    foundation_ = foundation::FoundationModel(spec, r_fm);

    Rng r_cfp = factory.stream("model.cfp");
    fusion_ = cfp::CfpFusion(cfg.branch_feat, cfg.encoder_channels, r_cfp);

    Rng r_pmm = factory.stream("model.pmm");
    mixer_ = prompting::PromptMixer(cfg.encoder_channels, cfg.prompt_dim, r_pmm);
}

branch::ViewBranch& Model::view_branch(ViewId v) {
    switch (v) {
        case ViewId::RGB: return rgb_;
        case ViewId::SRM: return srm_;
        case ViewId::BAYAR: return bayar_branch_;
        case ViewId::NOISEPRINT: return noiseprint_branch_;
        case ViewId::ENS: break;
    }
    throw Error("ENS is a selection, not a branch");
}

const branch::ViewBranch& Model::view_branch(ViewId v) const {
    return const_cast<Model*>(this)->view_branch(v);
}

nn::ParamList Model::trainable_params() const {
    nn::ParamList out;
    rgb_.collect("branch.rgb", out);
    srm_.collect("branch.srm", out);
    bayar_branch_.collect("branch.bayar", out);
    noiseprint_branch_.collect("branch.noiseprint", out);
    bayar_.collect("bayar_kernels", out);
    noiseprint_.collect("noiseprint_surrogate", out);
    foundation_.collect_trainable("foundation", out);
    fusion_.collect("cfp", out);
    mixer_.collect("pmm", out);
    return out;
}

nn::ParamList Model::all_params() const {
    nn::ParamList out = trainable_params();
    foundation_.collect_frozen("foundation", out);
    return out;
}

}  // namespace imdp
