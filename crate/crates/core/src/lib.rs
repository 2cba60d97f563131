pub mod extract;
pub mod fixtures;
pub mod numkernel;
pub mod polymat;
pub mod reduction;
pub mod statespace;
pub mod storage;
