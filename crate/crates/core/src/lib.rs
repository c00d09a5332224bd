// SPDX-License-Identifier: Apache-2.0

pub mod audit;
pub mod compiler;
pub mod content_ref;
pub mod lang;
pub mod mediator;
pub mod ontology;
pub mod simnet;
