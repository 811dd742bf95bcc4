pub mod cir_grammar;
