pub use fslice;
