# %% [markdown]
# # Talking to a chat-completion endpoint
#
# Agents can call any OpenAI-style `/chat/completions` service. Here a tiny
# in-process server stands in for the model so the script runs offline.

# %%
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from contribdag import HashEmbedder, HttpAgent, HttpEndpoint, OrchestratorConfig, default_roster, run


class Echo(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):  # noqa: N802
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        user = body["messages"][-1]["content"]
        text = f"Having read {user.count('responded:')} peer notes, the answer is 4."
        reply = {"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                 "usage": {"prompt_tokens": len(user.split()), "completion_tokens": len(text.split())}}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


server = ThreadingHTTPServer(("127.0.0.1", 0), Echo)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"

# %%
endpoint = HttpEndpoint(url=url, model="demo")
agents = [HttpAgent(role, endpoint, HashEmbedder()) for role in default_roster(4)]
res = run("What is 2+2?", OrchestratorConfig(n_agents=4, rounds=2, backend="http"), agents)
print(res.final_text)
print("tokens (prompt, completion):", res.total_tokens)
server.shutdown()
