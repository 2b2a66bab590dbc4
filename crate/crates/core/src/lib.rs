pub mod adversary;
pub mod amplify;
pub mod bits;
pub mod gadget;
pub mod harness;
pub mod ntcf;
pub mod oracle;
pub mod protocol;
pub mod seed;
pub mod selftest;
pub mod tables;
