//! Game-form variants: asymmetric identity priors, sequential talk and a
//! single speaker facing an outside option.

pub mod identity;
pub mod one_speaker;
pub mod sequential;

pub use identity::{
    favored_half_consistency, identity_boundary, identity_equilibrium,
    identity_equilibrium_with_rule, identity_mc, identity_rule_pair, IdentityEquilibrium,
    IdentityJudge, IdentityMc, IdentityRegime, IdentityRulePair,
};
pub use one_speaker::{
    classify_one_speaker, one_speaker_equilibrium, one_speaker_equilibrium_with,
    one_speaker_value, solve_z, OneSpeakerEquilibrium, OneSpeakerRegime, ONE_SPEAKER_TABLE,
};
pub use sequential::{
    sequential_equilibrium, sequential_mc, SequentialMc, SequentialReport, SequentialStrategies,
};
