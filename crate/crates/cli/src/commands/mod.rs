pub mod consensus;
pub mod representativity;
pub mod verify;
