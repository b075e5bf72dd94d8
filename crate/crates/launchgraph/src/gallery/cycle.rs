use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, ProgramGraph};

use crate::service::{arg_i64, BuildContext, MethodError, MethodResult, NodeContext, Service};
use crate::wire::Client;
use crate::Error;

/// `ping(x)` asks its peer to `ack(x)` and returns the answer plus one.
pub struct Pinger {
    peer: Client,
}

impl Pinger {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(Pinger {
            peer: ctx.client(ctx.arg(0)?)?,
        })
    }
}

impl Service for Pinger {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        match method {
            "ping" => {
                let x = arg_i64(args, 0)?;
                let acked = self.peer.call("ack", vec![x.into()])?;
                let v = acked.as_i64().ok_or("ack returned a non-integer")?;
                Ok((v + 1).into())
            }
            m => Err(format!("no such method: {m}").into()),
        }
    }
}

/// `ack(x)` returns `x + 1`. Its run sends `ping(1)` to the peer and emits
/// the reply, which completes one round trip in each direction.
pub struct Ponger {
    peer: Client,
}

impl Ponger {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(Ponger {
            peer: ctx.client(ctx.arg(0)?)?,
        })
    }
}

impl Service for Ponger {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        match method {
            "ack" => Ok((arg_i64(args, 0)? + 1).into()),
            m => Err(format!("no such method: {m}").into()),
        }
    }

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let reply = self.peer.call("ping", vec![1.into()])?;
        ctx.emit(&reply.as_i64().ok_or("ping returned a non-integer")?.to_string());
        Ok(())
    }
}

/// Node 0 is deferred and later bound as a Pinger holding node 1's
/// handle; node 1 is a Ponger holding node 0's handle.
pub fn cycle_program() -> Result<ProgramGraph, Error> {
    let mut p = ProgramGraph::new("cycle")?;
    let (a, slot) = p.add_deferred_node()?;
    let b = p
        .add_node(NodeDef::service("Ponger", vec![a.arg()]))?
        .expect("services yield handles");
    p.bind_deferred(slot, "Pinger", vec![b.arg()])?;
    Ok(p)
}
