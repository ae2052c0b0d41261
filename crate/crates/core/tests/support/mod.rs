pub mod cases;
pub mod reference;
pub mod gradcheck;
