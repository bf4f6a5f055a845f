"""BRST identity verification commands."""
from typing import Any, Dict, List, Optional, Tuple, TypedDict, TypeVar

from auto_gpt_plugin_template import AutoGPTPluginTemplate

try:
    from .brst_commands import BrstVerifyCommands
except ImportError:
    from brst_commands import BrstVerifyCommands

PromptGenerator = TypeVar("PromptGenerator")


class Message(TypedDict):
    role: str
    content: str


class BrstVerifyPlugin(AutoGPTPluginTemplate):
    """
    Lets Auto-GPT verify the BRST identities of shifted and dressed
    Cartan geometries and run scene scripts.
    """

    def __init__(self):
        super().__init__()
        self._name = "BrstVerifyPlugin"
        self._version = "0.1.0"
        self._description = (
            "Verifies BRST identities of gravity, conformal and Yang-Mills scenes "
            "by exact symbolic reduction and exact rational point evaluation."
        )
        self.plugin_class = BrstVerifyCommands(self)

    def post_prompt(self, prompt: PromptGenerator) -> PromptGenerator:
        """Registers brst_verify_suite, brst_run_script and brst_explain_identity.
        Args:
            prompt (PromptGenerator): The prompt generator.
        Returns:
            PromptGenerator: The prompt generator.
        """
        prompt.add_command(  # type: ignore
            "brst_verify_suite",
            "Verify the BRST identity suite of a scene",
            {"scene": "<gr|conformal|ym>", "dim": "<int>", "normal": "<bool>"},
            self.plugin_class.verify_suite,
        )
        prompt.add_command(  # type: ignore
            "brst_run_script",
            "Run a BRST scene script",
            {"script": "<script text>"},
            self.plugin_class.run_script,
        )
        prompt.add_command(  # type: ignore
            "brst_explain_identity",
            "Explain one BRST identity",
            {"identity": "<identity id, e.g. gr.v_hat_zero>"},
            self.plugin_class.explain_identity,
        )
        return prompt

    def can_handle_post_prompt(self) -> bool:
        return True

    def can_handle_on_response(self) -> bool:
        return False

    def on_response(self, response: str, *args, **kwargs) -> str:
        return response

    def can_handle_on_planning(self) -> bool:
        return False

    def on_planning(
        self, prompt: PromptGenerator, messages: List[Message]
    ) -> Optional[str]:
        pass

    def can_handle_post_planning(self) -> bool:
        return False

    def post_planning(self, response: str) -> str:
        return response

    def can_handle_pre_instruction(self) -> bool:
        return False

    def pre_instruction(self, messages: List[Message]) -> List[Message]:
        return messages

    def can_handle_on_instruction(self) -> bool:
        return False

    def on_instruction(self, messages: List[Message]) -> Optional[str]:
        pass

    def can_handle_post_instruction(self) -> bool:
        return False

    def post_instruction(self, response: str) -> str:
        return response

    def can_handle_pre_command(self) -> bool:
        return False

    def pre_command(
        self, command_name: str, arguments: Dict[str, Any]
    ) -> Tuple[str, Dict[str, Any]]:
        return command_name, arguments

    def can_handle_post_command(self) -> bool:
        return False

    def post_command(self, command_name: str, response: str) -> str:
        return response

    def can_handle_chat_completion(
        self,
        messages: List[Dict[Any, Any]],
        model: str,
        temperature: float,
        max_tokens: int,
    ) -> bool:
        return False

    def handle_chat_completion(
        self,
        messages: List[Dict[Any, Any]],
        model: str,
        temperature: float,
        max_tokens: int,
    ) -> str:
        return ""

    def can_handle_text_embedding(self, text: str) -> bool:  # type: ignore
        return False

    def handle_text_embedding(self, text: str) -> list:  # type: ignore
        pass

    def can_handle_user_input(self, user_input: str) -> bool:
        return False

    def user_input(self, user_input: str) -> str:
        return user_input

    def can_handle_report(self) -> bool:
        return False

    def report(self, message: str) -> None:
        pass
