//! Learnable objects: ISS Lyapunov functions, gains, decentralized
//! controllers, their per-group bundles and the port to larger networks.

mod bundle;
mod certificate;
mod policy;

pub use bundle::{port_certificate, CertificateBundle, GroupParams, TauMap};
pub use certificate::{gain_eval, sigmoid, CertGrads, CertJvpTape, CertTape, IssCertificate};
pub use policy::{DecentralizedPolicy, PolicyTape};
